//! Symbolic tensor calculus on Kähler manifolds with a verification suite
//! for the curvature identities of the Hitchin and Hitchin-Witten
//! connections, plus a numerical flat-torus model that cross-checks the
//! connection formulas at desk scale.

pub mod scalar;
pub mod expr;
pub mod parse;

pub use expr::{Atom, Ctx, Dir, ExprError, Index, Label, Part, Proj, Sym, TensorExpr, Term, Variance};
pub use scalar::Scalar;
