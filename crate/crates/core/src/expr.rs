//! Abstract-index tensor expression IR.
//!
//! A `TensorExpr` is a sum of terms; each term is an exact scalar coefficient
//! times a multiset of indexed atoms with a consistent contraction structure.
//! Contracted (dummy) indices appear exactly twice, once up and once down.
//! Projection decorations (`'` holomorphic, `''` antiholomorphic) live on
//! index occurrences; on a contraction the two decorations compose, and
//! opposite projections annihilate the term.
//!
//! Terms are kept in a canonical form: dummy indices renamed deterministically,
//! atoms sorted, and slot arrangements minimized over each atom's symmetry
//! group with sign tracking. A term mapped onto itself by an odd symmetry is
//! zero and is dropped.

use crate::scalar::Scalar;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Variance {
    Up,
    Down,
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Default)]
pub enum Proj {
    #[default]
    None,
    Hol,
    Anti,
}

impl Proj {
    pub fn conj(self) -> Proj {
        match self {
            Proj::None => Proj::None,
            Proj::Hol => Proj::Anti,
            Proj::Anti => Proj::Hol,
        }
    }
    /// Compose two projections across a contraction. None if they annihilate.
    pub fn compose(self, other: Proj) -> Option<Proj> {
        match (self, other) {
            (Proj::None, p) | (p, Proj::None) => Some(p),
            (Proj::Hol, Proj::Hol) => Some(Proj::Hol),
            (Proj::Anti, Proj::Anti) => Some(Proj::Anti),
            _ => None,
        }
    }
    pub fn complement(self) -> Proj {
        self.conj()
    }
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Label {
    Named(String),
    Dummy(u16),
    Jet(u8),
}

impl Label {
    pub fn named(s: &str) -> Label {
        Label::Named(s.to_string())
    }
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Index {
    pub label: Label,
    pub var: Variance,
    pub proj: Proj,
}

impl Index {
    pub fn up(l: &str) -> Index {
        Index { label: Label::named(l), var: Variance::Up, proj: Proj::None }
    }
    pub fn down(l: &str) -> Index {
        Index { label: Label::named(l), var: Variance::Down, proj: Proj::None }
    }
    pub fn with_proj(mut self, p: Proj) -> Index {
        self.proj = p;
        self
    }
}

/// Holomorphic part selector on a parameter-space field.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Part {
    Full,
    Hol,
    Anti,
}

impl Part {
    pub fn conj(self) -> Part {
        match self {
            Part::Full => Part::Full,
            Part::Hol => Part::Anti,
            Part::Anti => Part::Hol,
        }
    }
}

/// A parameter-space direction: a named field with an optional part.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Dir {
    pub field: String,
    pub part: Part,
}

impl Dir {
    pub fn full(f: &str) -> Dir {
        Dir { field: f.to_string(), part: Part::Full }
    }
    pub fn hol(f: &str) -> Dir {
        Dir { field: f.to_string(), part: Part::Hol }
    }
    pub fn anti(f: &str) -> Dir {
        Dir { field: f.to_string(), part: Part::Anti }
    }
    pub fn conj(&self) -> Dir {
        Dir { field: self.field.clone(), part: self.part.conj() }
    }
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Sym {
    Metric,
    MetricInv,
    Omega,
    OmegaInv,
    J,
    Id,
    Riem,
    Ricci,
    RicciForm,
    ScalCurv,
    F,
    G,
    Gbar,
    BigTheta,
    SmallTheta,
    CForm,
    VarF,
    Var2F,
    VarG,
    VarGbar,
    Sect,
    User(Box<str>),
}

/// Slot symmetry classes.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum SlotSym {
    None,
    FullSym,
    FullAntiSym,
    /// Riemann tensor: antisymmetric pairs (0,1), (2,3) and pair exchange.
    Riemann,
}

/// Implicit projection type of slots.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum SlotType {
    Plain,
    /// Both slots of type (1,1): equal projections vanish, one projection
    /// forces the complement on the partner. Applies pairwise for Riemann.
    OneOne,
    /// All slots holomorphic.
    Hol,
    /// All slots antiholomorphic.
    Anti,
}

#[derive(Clone, Debug)]
pub struct SymInfo {
    pub slots: Vec<Variance>,
    pub sym: SlotSym,
    pub stype: SlotType,
    pub nargs: usize,
    /// Parallel under the Levi-Civita connection: derivative prefix kills it.
    pub parallel: bool,
}

/// Declared auxiliary symbol.
#[derive(Clone, Debug)]
pub struct UserSym {
    pub slots: Vec<Variance>,
    pub sym: SlotSym,
    pub stype: SlotType,
}

/// Declaration context: auxiliary tensors and parameter-space fields.
#[derive(Clone, Debug, Default)]
pub struct Ctx {
    pub users: BTreeMap<String, UserSym>,
    /// Pairs of fields declared NOT to commute. Default is commuting.
    pub noncommuting: BTreeSet<(String, String)>,
}

impl Ctx {
    pub fn new() -> Ctx {
        Ctx::default()
    }
    /// Standard test vocabulary: X, Y vectors; A, B symmetric bivectors;
    /// f, h scalar fields.
    pub fn with_standard_aux() -> Ctx {
        let mut c = Ctx::new();
        c.declare("X", vec![Variance::Up], SlotSym::None, SlotType::Plain);
        c.declare("Y", vec![Variance::Up], SlotSym::None, SlotType::Plain);
        c.declare("A", vec![Variance::Up, Variance::Up], SlotSym::FullSym, SlotType::Plain);
        c.declare("B", vec![Variance::Up, Variance::Up], SlotSym::FullSym, SlotType::Plain);
        c.declare("f", vec![], SlotSym::None, SlotType::Plain);
        c.declare("h", vec![], SlotSym::None, SlotType::Plain);
        c
    }
    pub fn declare(&mut self, name: &str, slots: Vec<Variance>, sym: SlotSym, stype: SlotType) {
        self.users.insert(name.to_string(), UserSym { slots, sym, stype });
    }
    pub fn commuting(&self, a: &str, b: &str) -> bool {
        !self.noncommuting.contains(&(a.to_string(), b.to_string()))
            && !self.noncommuting.contains(&(b.to_string(), a.to_string()))
    }
}

impl Sym {
    pub fn info(&self, ctx: &Ctx) -> SymInfo {
        use Variance::*;
        let mk = |slots: Vec<Variance>, sym, stype, nargs, parallel| SymInfo {
            slots,
            sym,
            stype,
            nargs,
            parallel,
        };
        match self {
            Sym::Metric => mk(vec![Down, Down], SlotSym::FullSym, SlotType::OneOne, 0, true),
            Sym::MetricInv => mk(vec![Up, Up], SlotSym::FullSym, SlotType::OneOne, 0, true),
            Sym::Omega => mk(vec![Down, Down], SlotSym::FullAntiSym, SlotType::OneOne, 0, true),
            Sym::OmegaInv => mk(vec![Up, Up], SlotSym::FullAntiSym, SlotType::OneOne, 0, true),
            Sym::J => mk(vec![Up, Down], SlotSym::None, SlotType::Plain, 0, true),
            Sym::Id => mk(vec![Up, Down], SlotSym::None, SlotType::Plain, 0, true),
            Sym::Riem => mk(vec![Down, Down, Down, Down], SlotSym::Riemann, SlotType::OneOne, 0, false),
            Sym::Ricci => mk(vec![Down, Down], SlotSym::FullSym, SlotType::OneOne, 0, false),
            Sym::RicciForm => mk(vec![Down, Down], SlotSym::FullAntiSym, SlotType::OneOne, 0, false),
            Sym::ScalCurv => mk(vec![], SlotSym::None, SlotType::Plain, 0, false),
            Sym::F => mk(vec![], SlotSym::None, SlotType::Plain, 0, false),
            Sym::G => mk(vec![Up, Up], SlotSym::FullSym, SlotType::Hol, 1, false),
            Sym::Gbar => mk(vec![Up, Up], SlotSym::FullSym, SlotType::Anti, 1, false),
            Sym::BigTheta => mk(vec![Up, Up], SlotSym::FullSym, SlotType::Plain, 2, false),
            Sym::SmallTheta => mk(vec![], SlotSym::None, SlotType::Plain, 2, false),
            Sym::CForm => mk(vec![], SlotSym::None, SlotType::Plain, 1, false),
            Sym::VarF => mk(vec![], SlotSym::None, SlotType::Plain, 1, false),
            Sym::Var2F => mk(vec![], SlotSym::None, SlotType::Plain, 2, false),
            Sym::VarG => mk(vec![Up, Up], SlotSym::FullSym, SlotType::Hol, 2, false),
            Sym::VarGbar => mk(vec![Up, Up], SlotSym::FullSym, SlotType::Anti, 2, false),
            Sym::Sect => mk(vec![], SlotSym::None, SlotType::Plain, 0, false),
            Sym::User(name) => match ctx.users.get(name.as_ref()) {
                Some(u) => mk(u.slots.clone(), u.sym, u.stype, 0, false),
                None => mk(vec![], SlotSym::None, SlotType::Plain, 0, false),
            },
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Sym::Metric => "g",
            Sym::MetricInv => "gInv",
            Sym::Omega => "omega",
            Sym::OmegaInv => "omegaInv",
            Sym::J => "J",
            Sym::Id => "Id",
            Sym::Riem => "R",
            Sym::Ricci => "r",
            Sym::RicciForm => "rho",
            Sym::ScalCurv => "scal",
            Sym::F => "F",
            Sym::G => "G",
            Sym::Gbar => "Gbar",
            Sym::BigTheta => "Theta",
            Sym::SmallTheta => "theta",
            Sym::CForm => "c",
            Sym::VarF => "varF",
            Sym::Var2F => "var2F",
            Sym::VarG => "varG",
            Sym::VarGbar => "varGbar",
            Sym::Sect => "s",
            Sym::User(n) => n,
        }
    }

    pub fn conj(&self) -> Sym {
        match self {
            Sym::G => Sym::Gbar,
            Sym::Gbar => Sym::G,
            Sym::VarG => Sym::VarGbar,
            Sym::VarGbar => Sym::VarG,
            other => other.clone(),
        }
    }
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Atom {
    pub sym: Sym,
    pub args: Vec<Dir>,
    /// Covariant derivative prefix, outermost first: prefix [a, b] is
    /// nabla_a nabla_b applied to the bare atom.
    pub prefix: Vec<Index>,
    pub slots: Vec<Index>,
}

impl Atom {
    pub fn new(sym: Sym, slots: Vec<Index>) -> Atom {
        Atom { sym, args: vec![], prefix: vec![], slots }
    }
    pub fn with_args(sym: Sym, args: Vec<Dir>, slots: Vec<Index>) -> Atom {
        Atom { sym, args, prefix: vec![], slots }
    }
    pub fn user(name: &str, slots: Vec<Index>) -> Atom {
        Atom::new(Sym::User(name.into()), slots)
    }
    fn indices(&self) -> impl Iterator<Item = &Index> {
        self.prefix.iter().chain(self.slots.iter())
    }
}

/// One additive term: coefficient times atom product.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Term {
    pub coef: Scalar,
    pub atoms: Vec<Atom>,
}

#[derive(thiserror::Error, Debug, Clone, PartialEq, Eq)]
pub enum ExprError {
    #[error("index `{0}` appears {1} times in a term (must be 1 or 2)")]
    BadIndexCount(String, usize),
    #[error("contracted index `{0}` repeats with the same variance")]
    SameVariancePair(String),
    #[error("unknown symbol `{0}`")]
    UnknownSymbol(String),
    #[error("symbol `{0}` expects {1} indices, got {2}")]
    ArityMismatch(String, usize, usize),
    #[error("symbol `{0}` expects {1} arguments, got {2}")]
    ArgMismatch(String, usize, usize),
    #[error("syntax error at byte {0}: {1}")]
    Syntax(usize, String),
    #[error("free index `{0}` is not present or not contravariant")]
    BadSlot(String),
    #[error("symmetrization slots must be free and of equal variance")]
    BadSymmetrize,
    #[error("terms disagree on free indices: {0}")]
    FreeIndexMismatch(String),
    #[error("no variation rule for atom `{0}`")]
    NoVariationRule(String),
    #[error("variation rule for `{0}` requires commuting fields")]
    NeedsCommuting(String),
    #[error("rewrite budget exceeded: {0}")]
    Budget(String),
}

/// Canonicalization search cap; beyond this the term is reported as a
/// budget error by callers that care.
const BRANCH_CAP: usize = 20000;

#[derive(Clone, Default, Debug, PartialEq, Eq)]
pub struct TensorExpr {
    /// Canonical atom products mapped to coefficients.
    pub terms: BTreeMap<Vec<Atom>, Scalar>,
}

impl TensorExpr {
    pub fn zero() -> TensorExpr {
        TensorExpr::default()
    }
    pub fn scalar(c: Scalar) -> TensorExpr {
        let mut e = TensorExpr::zero();
        if !c.is_zero() {
            e.terms.insert(vec![], c);
        }
        e
    }
    pub fn one() -> TensorExpr {
        TensorExpr::scalar(Scalar::one())
    }
    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }
    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn from_terms(terms: Vec<Term>, ctx: &Ctx) -> Result<TensorExpr, ExprError> {
        let mut e = TensorExpr::zero();
        for t in terms {
            e.add_term(t, ctx)?;
        }
        Ok(e)
    }

    pub fn add_term(&mut self, t: Term, ctx: &Ctx) -> Result<(), ExprError> {
        if t.coef.is_zero() {
            return Ok(());
        }
        if let Some((shape, coef)) = canonical_term(t, ctx)? {
            match self.terms.entry(shape) {
                std::collections::btree_map::Entry::Occupied(mut o) => {
                    let s = o.get().add(&coef);
                    if s.is_zero() {
                        o.remove();
                    } else {
                        *o.get_mut() = s;
                    }
                }
                std::collections::btree_map::Entry::Vacant(v) => {
                    v.insert(coef);
                }
            }
        }
        Ok(())
    }

    pub fn add(&self, o: &TensorExpr) -> TensorExpr {
        let mut r = self.clone();
        for (shape, c) in &o.terms {
            match r.terms.entry(shape.clone()) {
                std::collections::btree_map::Entry::Occupied(mut e) => {
                    let s = e.get().add(c);
                    if s.is_zero() {
                        e.remove();
                    } else {
                        *e.get_mut() = s;
                    }
                }
                std::collections::btree_map::Entry::Vacant(v) => {
                    v.insert(c.clone());
                }
            }
        }
        r
    }
    pub fn sub(&self, o: &TensorExpr) -> TensorExpr {
        self.add(&o.scale(&Scalar::from_int(-1)))
    }
    pub fn scale(&self, c: &Scalar) -> TensorExpr {
        if c.is_zero() {
            return TensorExpr::zero();
        }
        TensorExpr { terms: self.terms.iter().map(|(s, x)| (s.clone(), x.mul(c))).collect() }
    }
    pub fn neg(&self) -> TensorExpr {
        self.scale(&Scalar::from_int(-1))
    }

    /// Product of expressions. Shared free labels across the factors become
    /// contractions; dummy labels are freshened to avoid capture.
    pub fn mul(&self, o: &TensorExpr, ctx: &Ctx) -> TensorExpr {
        let mut r = TensorExpr::zero();
        for (s1, c1) in &self.terms {
            for (s2, c2) in &o.terms {
                let a1 = freshen_dummies(s1, 0);
                let a2 = freshen_dummies(s2, 30000);
                let mut atoms = a1;
                atoms.extend(a2);
                let t = Term { coef: c1.mul(c2), atoms };
                r.add_term(t, ctx).expect("well-formed product");
            }
        }
        r
    }

    pub fn terms_iter(&self) -> impl Iterator<Item = Term> + '_ {
        self.terms.iter().map(|(s, c)| Term { coef: c.clone(), atoms: s.clone() })
    }

    /// The free-index set (label, variance) of the expression, verifying all
    /// terms agree. Zero has any free indices.
    pub fn free_indices(&self) -> Result<BTreeSet<(Label, Variance)>, ExprError> {
        let mut out: Option<BTreeSet<(Label, Variance)>> = None;
        for (shape, _) in &self.terms {
            let f = free_of_shape(shape);
            match &out {
                None => out = Some(f),
                Some(prev) => {
                    if *prev != f {
                        return Err(ExprError::FreeIndexMismatch(format!(
                            "{:?} vs {:?}",
                            prev, f
                        )));
                    }
                }
            }
        }
        Ok(out.unwrap_or_default())
    }

    /// Average over all permutations of the named free slots.
    pub fn symmetrize(&self, slots: &[&str], ctx: &Ctx) -> Result<TensorExpr, ExprError> {
        let free = self.free_indices()?;
        let mut var: Option<Variance> = None;
        for s in slots {
            let found = free.iter().find(|(l, _)| *l == Label::named(s));
            match found {
                Some((_, v)) => {
                    if let Some(v0) = var {
                        if v0 != *v {
                            return Err(ExprError::BadSymmetrize);
                        }
                    }
                    var = Some(*v);
                }
                None => {
                    if !self.is_zero() {
                        return Err(ExprError::BadSymmetrize);
                    }
                }
            }
        }
        let perms = permutations(slots.len());
        let mut acc = TensorExpr::zero();
        for p in &perms {
            let relabeled = self.rename_free(
                &slots
                    .iter()
                    .enumerate()
                    .map(|(j, s)| (s.to_string(), slots[p[j]].to_string()))
                    .collect(),
                ctx,
            )?;
            acc = acc.add(&relabeled);
        }
        Ok(acc.scale(&Scalar::from_ratio(1, perms.len() as i64)))
    }

    /// Rename free indices by the given map (simultaneous).
    pub fn rename_free(
        &self,
        map: &BTreeMap<String, String>,
        ctx: &Ctx,
    ) -> Result<TensorExpr, ExprError> {
        let mut r = TensorExpr::zero();
        for (shape, c) in &self.terms {
            let mut atoms = shape.clone();
            for a in &mut atoms {
                for ix in a.prefix.iter_mut().chain(a.slots.iter_mut()) {
                    if let Label::Named(n) = &ix.label {
                        if let Some(new) = map.get(n) {
                            ix.label = Label::Named(format!("\u{1}{}", new));
                        }
                    }
                }
            }
            // strip the capture-avoidance marker
            for a in &mut atoms {
                for ix in a.prefix.iter_mut().chain(a.slots.iter_mut()) {
                    if let Label::Named(n) = &ix.label {
                        if let Some(stripped) = n.strip_prefix('\u{1}') {
                            ix.label = Label::Named(stripped.to_string());
                        }
                    }
                }
            }
            r.add_term(Term { coef: c.clone(), atoms }, ctx)?;
        }
        Ok(r)
    }

    /// Complex conjugation: swaps projections, G and Gbar, t and tbar, i -> -i.
    pub fn conjugate(&self, ctx: &Ctx) -> TensorExpr {
        let mut r = TensorExpr::zero();
        for (shape, c) in &self.terms {
            let atoms: Vec<Atom> = shape
                .iter()
                .map(|a| {
                    let mut b = a.clone();
                    b.sym = a.sym.conj();
                    b.args = a.args.iter().map(|d| d.conj()).collect();
                    for ix in b.prefix.iter_mut().chain(b.slots.iter_mut()) {
                        ix.proj = ix.proj.conj();
                    }
                    b
                })
                .collect();
            r.add_term(Term { coef: c.conj(), atoms }, ctx).expect("conjugate well-formed");
        }
        r
    }

    /// Covariant derivative on M: prepend nabla with the given index to each
    /// atom in turn (Leibniz). The new index must not collide with existing
    /// labels.
    pub fn m_derivative(&self, idx: &Index, ctx: &Ctx) -> TensorExpr {
        assert_eq!(idx.var, Variance::Down);
        let mut r = TensorExpr::zero();
        for (shape, c) in &self.terms {
            for j in 0..shape.len() {
                let mut atoms = shape.clone();
                atoms[j].prefix.insert(0, idx.clone());
                r.add_term(Term { coef: c.clone(), atoms }, ctx).expect("derivative well-formed");
            }
        }
        r
    }

    /// Divergence: contract a covariant derivative against the named free
    /// contravariant slot.
    pub fn divergence(&self, slot: &str, ctx: &Ctx) -> Result<TensorExpr, ExprError> {
        let free = self.free_indices()?;
        if !free.contains(&(Label::named(slot), Variance::Up)) {
            if self.is_zero() {
                return Ok(TensorExpr::zero());
            }
            return Err(ExprError::BadSlot(slot.to_string()));
        }
        Ok(self.m_derivative(&Index::down(slot), ctx))
    }
}

pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = vec![];
    let rest = permutations(n - 1);
    for p in rest {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out.sort();
    out
}

pub fn free_of_shape(shape: &[Atom]) -> BTreeSet<(Label, Variance)> {
    let mut count: BTreeMap<Label, Vec<(Variance, Proj)>> = BTreeMap::new();
    for a in shape {
        for ix in a.indices() {
            count.entry(ix.label.clone()).or_default().push((ix.var, ix.proj));
        }
    }
    count
        .into_iter()
        .filter(|(_, v)| v.len() == 1)
        .map(|(l, v)| (l, v[0].0))
        .collect()
}

fn freshen_dummies(shape: &[Atom], offset: u16) -> Vec<Atom> {
    shape
        .iter()
        .map(|a| {
            let mut b = a.clone();
            for ix in b.prefix.iter_mut().chain(b.slots.iter_mut()) {
                if let Label::Dummy(n) = ix.label {
                    ix.label = Label::Named(format!("\u{2}d{}", n as u32 + offset as u32));
                }
            }
            b
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Canonicalization
// ---------------------------------------------------------------------------

/// Occurrence address: (atom index, true=prefix, position).
type Occ = (usize, bool, usize);

fn occ_get<'a>(atoms: &'a [Atom], o: &Occ) -> &'a Index {
    if o.1 {
        &atoms[o.0].prefix[o.2]
    } else {
        &atoms[o.0].slots[o.2]
    }
}
fn occ_get_mut<'a>(atoms: &'a mut [Atom], o: &Occ) -> &'a mut Index {
    if o.1 {
        &mut atoms[o.0].prefix[o.2]
    } else {
        &mut atoms[o.0].slots[o.2]
    }
}

/// Validate pairing, compose projections, apply typed-slot and (1,1)
/// forcing, eliminate Id and decorated J contractions, fold Id traces.
/// Returns None if the term vanishes.
fn instant_normalize(mut t: Term, ctx: &Ctx) -> Result<Option<Term>, ExprError> {
    'restart: loop {
        // occurrence table
        let mut occs: BTreeMap<Label, Vec<Occ>> = BTreeMap::new();
        for (ai, a) in t.atoms.iter().enumerate() {
            let info = a.sym.info(ctx);
            if let Sym::User(n) = &a.sym {
                if !ctx.users.contains_key(n.as_ref()) {
                    return Err(ExprError::UnknownSymbol(n.to_string()));
                }
            }
            if a.slots.len() != info.slots.len() {
                return Err(ExprError::ArityMismatch(
                    a.sym.name().to_string(),
                    info.slots.len(),
                    a.slots.len(),
                ));
            }
            if a.args.len() != info.nargs {
                return Err(ExprError::ArgMismatch(
                    a.sym.name().to_string(),
                    info.nargs,
                    a.args.len(),
                ));
            }
            for (pi, ix) in a.prefix.iter().enumerate() {
                if ix.var != Variance::Down {
                    return Err(ExprError::BadSlot(format!("{:?}", ix.label)));
                }
                occs.entry(ix.label.clone()).or_default().push((ai, true, pi));
            }
            for (si, ix) in a.slots.iter().enumerate() {
                if ix.var != info.slots[si] {
                    // variance must match the declared signature
                    return Err(ExprError::BadSlot(format!(
                        "{} slot {} variance",
                        a.sym.name(),
                        si
                    )));
                }
                occs.entry(ix.label.clone()).or_default().push((ai, false, si));
            }
        }
        let mut pairs: Vec<(Occ, Occ)> = vec![];
        for (l, os) in &occs {
            match os.len() {
                1 => {}
                2 => {
                    let v1 = occ_get(&t.atoms, &os[0]).var;
                    let v2 = occ_get(&t.atoms, &os[1]).var;
                    if v1 == v2 {
                        return Err(ExprError::SameVariancePair(format!("{:?}", l)));
                    }
                    pairs.push((os[0], os[1]));
                }
                n => return Err(ExprError::BadIndexCount(format!("{:?}", l), n)),
            }
        }

        // Projection composition fixpoint over pairs + typed slots + (1,1).
        loop {
            let mut changed = false;
            // implicit slot types
            for ai in 0..t.atoms.len() {
                let info = t.atoms[ai].sym.info(ctx);
                let nslots = t.atoms[ai].slots.len();
                for si in 0..nslots {
                    let implied = match info.stype {
                        SlotType::Hol => Proj::Hol,
                        SlotType::Anti => Proj::Anti,
                        _ => Proj::None,
                    };
                    if implied != Proj::None {
                        let cur = t.atoms[ai].slots[si].proj;
                        match cur.compose(implied) {
                            None => return Ok(None),
                            Some(p) => {
                                if p != cur {
                                    t.atoms[ai].slots[si].proj = p;
                                    changed = true;
                                }
                            }
                        }
                    }
                }
                // (1,1) pairs: for 2-slot atoms the pair (0,1); for Riemann
                // the pairs (0,1), (2,3).
                if info.stype == SlotType::OneOne {
                    let pair_list: Vec<(usize, usize)> = if nslots == 2 {
                        vec![(0, 1)]
                    } else if nslots == 4 {
                        vec![(0, 1), (2, 3)]
                    } else {
                        vec![]
                    };
                    for (x, y) in pair_list {
                        let px = t.atoms[ai].slots[x].proj;
                        let py = t.atoms[ai].slots[y].proj;
                        if px != Proj::None && px == py {
                            return Ok(None);
                        }
                        if px != Proj::None && py == Proj::None {
                            t.atoms[ai].slots[y].proj = px.complement();
                            changed = true;
                        } else if py != Proj::None && px == Proj::None {
                            t.atoms[ai].slots[x].proj = py.complement();
                            changed = true;
                        }
                    }
                }
            }
            // pair composition
            for (o1, o2) in &pairs {
                let p1 = occ_get(&t.atoms, o1).proj;
                let p2 = occ_get(&t.atoms, o2).proj;
                match p1.compose(p2) {
                    None => return Ok(None),
                    Some(p) => {
                        if p != p1 || p != p2 {
                            occ_get_mut(&mut t.atoms, o1).proj = p;
                            occ_get_mut(&mut t.atoms, o2).proj = p;
                            changed = true;
                        }
                    }
                }
            }
            if !changed {
                break;
            }
        }

        // Parallel tensors never carry a derivative prefix.
        for a in &t.atoms {
            if a.sym.info(ctx).parallel && !a.prefix.is_empty() {
                return Ok(None);
            }
        }

        // Id traces and eliminations; J eliminations through decorations.
        for ai in 0..t.atoms.len() {
            let a = &t.atoms[ai];
            if a.sym == Sym::Id && a.prefix.is_empty() {
                let (u, d) = (a.slots[0].clone(), a.slots[1].clone());
                if u.label == d.label {
                    // trace: 2m, or m per projection
                    let m = Scalar::var(crate::scalar::VM);
                    let factor = match u.proj {
                        Proj::None => m.mul(&Scalar::from_int(2)),
                        _ => m,
                    };
                    t.coef = t.coef.mul(&factor);
                    t.atoms.remove(ai);
                    continue 'restart;
                }
                // eliminate through a contraction on either end
                for (this, other) in [(u.clone(), d.clone()), (d.clone(), u.clone())] {
                    if occs.get(&this.label).map(|v| v.len()) == Some(2) {
                        // rewire: partner occurrence takes `other`'s label,
                        // composing projections
                        let os = occs.get(&this.label).unwrap().clone();
                        let partner = os.iter().find(|o| o.0 != ai).cloned();
                        if let Some(po) = partner {
                            let mut atoms = t.atoms.clone();
                            {
                                let tgt = occ_get_mut(&mut atoms, &po);
                                tgt.label = other.label.clone();
                                tgt.proj = match tgt.proj.compose(this.proj).and_then(|p| p.compose(other.proj)) {
                                    None => return Ok(None),
                                    Some(p) => p,
                                };
                            }
                            atoms.remove(ai);
                            t = Term { coef: t.coef, atoms };
                            continue 'restart;
                        }
                    }
                }
            }
            if a.sym == Sym::J && a.prefix.is_empty() {
                // a decorated contraction through either slot resolves J to
                // +/- i times a rewiring
                let (u, d) = (a.slots[0].clone(), a.slots[1].clone());
                for (this, other) in [(u.clone(), d.clone()), (d.clone(), u.clone())] {
                    if this.proj != Proj::None {
                        let factor = match this.proj {
                            Proj::Hol => Scalar::i(),
                            Proj::Anti => Scalar::i().neg(),
                            Proj::None => unreachable!(),
                        };
                        if occs.get(&this.label).map(|v| v.len()) == Some(2) {
                            let os = occs.get(&this.label).unwrap().clone();
                            let partner = os.iter().find(|o| o.0 != ai).cloned();
                            if let Some(po) = partner {
                                let mut atoms = t.atoms.clone();
                                {
                                    let tgt = occ_get_mut(&mut atoms, &po);
                                    tgt.label = other.label.clone();
                                    tgt.proj = match tgt.proj.compose(this.proj).and_then(|p| p.compose(other.proj)) {
                                        None => return Ok(None),
                                        Some(p) => p,
                                    };
                                }
                                atoms.remove(ai);
                                t = Term { coef: t.coef.mul(&factor), atoms };
                                continue 'restart;
                            }
                        } else {
                            // free decorated slot: J -> +/- i Id with the
                            // decoration kept
                            let mut atoms = t.atoms.clone();
                            atoms[ai].sym = Sym::Id;
                            t = Term { coef: t.coef.mul(&factor), atoms };
                            continue 'restart;
                        }
                    }
                }
            }
        }
        return Ok(Some(t));
    }
}

/// Local arrangements of an atom's slots under its symmetry group, with sign.
fn symmetry_images(a: &Atom, ctx: &Ctx) -> Vec<(Atom, i8)> {
    let info = a.sym.info(ctx);
    let mut base: Vec<(Atom, i8)> = vec![(a.clone(), 1)];
    // scalar atoms other than the section placeholder: innermost two
    // covariant derivatives commute
    if info.slots.is_empty() && a.sym != Sym::Sect && a.prefix.len() >= 2 {
        let mut b = a.clone();
        let n = b.prefix.len();
        b.prefix.swap(n - 2, n - 1);
        base.push((b, 1));
    }
    let mut out: Vec<(Atom, i8)> = vec![];
    for (at, sg) in base {
        match info.sym {
            SlotSym::None => out.push((at, sg)),
            SlotSym::FullSym | SlotSym::FullAntiSym => {
                let n = at.slots.len();
                for p in permutations(n) {
                    let mut b = at.clone();
                    for (j, &pj) in p.iter().enumerate() {
                        b.slots[j] = at.slots[pj].clone();
                    }
                    let sign = if info.sym == SlotSym::FullAntiSym {
                        perm_sign(&p)
                    } else {
                        1
                    };
                    out.push((b, sg * sign));
                }
            }
            SlotSym::Riemann => {
                // group of order 8: swap(0,1) -, swap(2,3) -, pair exchange +
                for sw1 in [false, true] {
                    for sw2 in [false, true] {
                        for px in [false, true] {
                            let mut s = at.slots.clone();
                            if sw1 {
                                s.swap(0, 1);
                            }
                            if sw2 {
                                s.swap(2, 3);
                            }
                            if px {
                                s.swap(0, 2);
                                s.swap(1, 3);
                            }
                            let mut b = at.clone();
                            b.slots = s;
                            let sign = if sw1 != sw2 { -1 } else { 1 };
                            out.push((b, sg * sign));
                        }
                    }
                }
            }
        }
    }
    // argument symmetries
    let arg_variants: Vec<(Vec<Dir>, i8)> = match a.sym {
        Sym::VarG | Sym::VarGbar => {
            let mut v = a.args.clone();
            v.sort();
            vec![(v, 1)]
        }
        Sym::Var2F => {
            // canonical order: mixed parts stored (Hol, Anti); like parts sorted
            let mut v = a.args.clone();
            if v.len() == 2 {
                let key = |d: &Dir| (d.part != Part::Hol, d.field.clone());
                v.sort_by_key(key);
            }
            vec![(v, 1)]
        }
        Sym::BigTheta | Sym::SmallTheta => {
            // antisymmetric in the two arguments
            if a.args.len() == 2 && a.args[0] > a.args[1] {
                vec![(vec![a.args[1].clone(), a.args[0].clone()], -1)]
            } else {
                vec![(a.args.clone(), 1)]
            }
        }
        _ => vec![(a.args.clone(), 1)],
    };
    let mut final_out = vec![];
    for (args, asg) in &arg_variants {
        for (at, sg) in &out {
            let mut b = at.clone();
            b.args = args.clone();
            final_out.push((b, sg * asg));
        }
    }
    final_out.sort_by(|x, y| x.0.cmp(&y.0).then(x.1.cmp(&y.1)));
    final_out.dedup();
    final_out
}

fn perm_sign(p: &[usize]) -> i8 {
    let mut inv = 0;
    for i in 0..p.len() {
        for j in i + 1..p.len() {
            if p[i] > p[j] {
                inv += 1;
            }
        }
    }
    if inv % 2 == 0 {
        1
    } else {
        -1
    }
}

/// Label-free structural key of an atom, used for the initial sort.
fn atom_coarse_key(a: &Atom, dummies: &BTreeSet<Label>) -> Vec<u8> {
    let mut k = vec![];
    let name = a.sym.name();
    k.extend_from_slice(name.as_bytes());
    k.push(0);
    for d in &a.args {
        k.extend_from_slice(d.field.as_bytes());
        k.push(match d.part {
            Part::Full => 1,
            Part::Hol => 2,
            Part::Anti => 3,
        });
    }
    k.push(0);
    k.push(a.prefix.len() as u8);
    for ix in a.prefix.iter().chain(a.slots.iter()) {
        k.push(match ix.var {
            Variance::Up => 1,
            Variance::Down => 2,
        });
        k.push(match ix.proj {
            Proj::None => 0,
            Proj::Hol => 1,
            Proj::Anti => 2,
        });
        match &ix.label {
            Label::Named(n) if !dummies.contains(&ix.label) => {
                k.push(1);
                k.extend_from_slice(n.as_bytes());
                k.push(0);
            }
            Label::Jet(j) => {
                k.push(2);
                k.push(*j);
            }
            _ => k.push(3),
        }
    }
    k
}

/// Canonical form of a term: sorted atoms, deterministically renamed
/// dummies, slot arrangements minimized over symmetry orbits. Returns the
/// canonical shape and the coefficient (sign folded in), or None if the term
/// is zero (including odd-automorphism kills).
pub fn canonical_term(t: Term, ctx: &Ctx) -> Result<Option<(Vec<Atom>, Scalar)>, ExprError> {
    let t = match instant_normalize(t, ctx)? {
        None => return Ok(None),
        Some(t) => t,
    };
    if t.coef.is_zero() {
        return Ok(None);
    }
    // collect dummies
    let mut counts: BTreeMap<Label, usize> = BTreeMap::new();
    for a in &t.atoms {
        for ix in a.indices() {
            *counts.entry(ix.label.clone()).or_insert(0) += 1;
        }
    }
    let dummies: BTreeSet<Label> = counts.iter().filter(|(_, &c)| c == 2).map(|(l, _)| l.clone()).collect();

    // coarse sort of atoms
    let mut order: Vec<usize> = (0..t.atoms.len()).collect();
    order.sort_by_key(|&i| atom_coarse_key(&t.atoms[i], &dummies));
    let keys: Vec<Vec<u8>> = order.iter().map(|&i| atom_coarse_key(&t.atoms[i], &dummies)).collect();

    // group ties
    let mut groups: Vec<Vec<usize>> = vec![];
    for (j, &i) in order.iter().enumerate() {
        if j > 0 && keys[j] == keys[j - 1] {
            groups.last_mut().unwrap().push(i);
        } else {
            groups.push(vec![i]);
        }
    }

    // enumerate orderings: permutations within tied groups
    let mut orderings: Vec<Vec<usize>> = vec![vec![]];
    for g in &groups {
        let perms = if g.len() == 1 {
            vec![vec![0]]
        } else {
            permutations(g.len())
        };
        let mut next = vec![];
        for o in &orderings {
            for p in &perms {
                let mut o2 = o.clone();
                for &pj in p {
                    o2.push(g[pj]);
                }
                next.push(o2);
                if next.len() > BRANCH_CAP {
                    return Err(ExprError::Budget("canonicalization orderings".into()));
                }
            }
        }
        orderings = next;
    }

    // For each ordering, scan atoms assigning dummy ranks, choosing symmetry
    // images minimizing the local sequence; branch on ties.
    #[derive(Clone)]
    struct State {
        atoms: Vec<Atom>,
        assign: BTreeMap<Label, u16>,
        next: u16,
        sign: i8,
    }
    let mut results: BTreeMap<Vec<Atom>, BTreeSet<i8>> = BTreeMap::new();
    let mut branch_count = 0usize;

    for ord in &orderings {
        let mut states = vec![State { atoms: vec![], assign: BTreeMap::new(), next: 0, sign: 1 }];
        for &ai in ord {
            let a = &t.atoms[ai];
            let images = symmetry_images(a, ctx);
            let mut next_states: Vec<State> = vec![];
            for st in &states {
                // rank images by local sequence
                let seq = |img: &Atom, st: &State| -> Vec<u32> {
                    let mut v = vec![];
                    for ix in img.prefix.iter().chain(img.slots.iter()) {
                        if dummies.contains(&ix.label) {
                            match st.assign.get(&ix.label) {
                                Some(r) => v.push(2 + *r as u32),
                                None => v.push(1_000_000), // new dummy: neutral
                            }
                        } else {
                            v.push(0); // fixed label; tie broken by coarse key
                        }
                    }
                    v
                };
                let mut best: Option<Vec<u32>> = None;
                let mut chosen: Vec<&(Atom, i8)> = vec![];
                for img in &images {
                    let s = seq(&img.0, st);
                    match &best {
                        None => {
                            best = Some(s);
                            chosen = vec![img];
                        }
                        Some(b) => {
                            if s < *b {
                                best = Some(s);
                                chosen = vec![img];
                            } else if s == *b {
                                chosen.push(img);
                            }
                        }
                    }
                }
                for (img, sg) in chosen {
                    let mut st2 = st.clone();
                    for ix in img.prefix.iter().chain(img.slots.iter()) {
                        if dummies.contains(&ix.label) && !st2.assign.contains_key(&ix.label) {
                            st2.assign.insert(ix.label.clone(), st2.next);
                            st2.next += 1;
                        }
                    }
                    st2.atoms.push(img.clone());
                    st2.sign *= sg;
                    next_states.push(st2);
                    branch_count += 1;
                    if branch_count > BRANCH_CAP {
                        return Err(ExprError::Budget("canonicalization branches".into()));
                    }
                }
            }
            // dedupe identical states
            next_states.sort_by(|x, y| {
                x.atoms
                    .cmp(&y.atoms)
                    .then_with(|| x.assign.cmp(&y.assign))
                    .then(x.sign.cmp(&y.sign))
            });
            next_states.dedup_by(|x, y| x.atoms == y.atoms && x.assign == y.assign && x.sign == y.sign);
            states = next_states;
        }
        for st in states {
            // apply dummy renaming
            let mut atoms = st.atoms.clone();
            for a in &mut atoms {
                for ix in a.prefix.iter_mut().chain(a.slots.iter_mut()) {
                    if let Some(r) = st.assign.get(&ix.label) {
                        ix.label = Label::Dummy(*r);
                    }
                }
            }
            results.entry(atoms).or_default().insert(st.sign);
        }
    }

    // minimal shape; detect odd automorphism (same shape with both signs)
    let (shape, signs) = results.into_iter().next().expect("at least one candidate");
    if signs.len() > 1 {
        return Ok(None);
    }
    let sign = *signs.iter().next().unwrap();
    let coef = if sign < 0 { t.coef.neg() } else { t.coef };
    Ok(Some((shape, coef)))
}

// ---------------------------------------------------------------------------
// Display
// ---------------------------------------------------------------------------

const DUMMY_POOL: [&str; 12] = ["u", "v", "w", "x", "y", "z", "p", "q", "u1", "v1", "w1", "x1"];

pub struct DisplayExpr<'a>(pub &'a TensorExpr);

fn label_display(l: &Label, names: &BTreeMap<u16, String>) -> String {
    match l {
        Label::Named(n) => n.clone(),
        Label::Dummy(d) => names.get(d).cloned().unwrap_or_else(|| format!("d{}", d)),
        Label::Jet(j) => format!("%{}", j),
    }
}

fn fmt_index(ix: &Index, names: &BTreeMap<u16, String>) -> String {
    let mut s = label_display(&ix.label, names);
    match ix.proj {
        Proj::None => {}
        Proj::Hol => s.push('\''),
        Proj::Anti => s.push_str("''"),
    }
    s
}

pub fn format_term(shape: &[Atom], names: &BTreeMap<u16, String>) -> String {
    let mut parts = vec![];
    for a in shape {
        let mut s = String::new();
        for p in &a.prefix {
            s.push_str(&format!("nabla_{{{}}} ", fmt_index(p, names)));
        }
        s.push_str(a.sym.name());
        if !a.args.is_empty() {
            s.push('(');
            for (j, d) in a.args.iter().enumerate() {
                if j > 0 {
                    s.push(',');
                }
                s.push_str(&d.field);
                match d.part {
                    Part::Full => {}
                    Part::Hol => s.push('\''),
                    Part::Anti => s.push_str("''"),
                }
            }
            s.push(')');
        }
        // group slots into runs of equal variance, stripping implied typed
        // decorations for readability
        let info_type = |sym: &Sym| matches!(sym, Sym::G | Sym::VarG) || matches!(sym, Sym::Gbar | Sym::VarGbar);
        let mut j = 0;
        while j < a.slots.len() {
            let v = a.slots[j].var;
            let mut run = vec![];
            while j < a.slots.len() && a.slots[j].var == v {
                let mut ix = a.slots[j].clone();
                if info_type(&a.sym) {
                    ix.proj = Proj::None;
                }
                run.push(fmt_index(&ix, names));
                j += 1;
            }
            match v {
                Variance::Up => s.push_str(&format!("^{{{}}}", run.join(" "))),
                Variance::Down => s.push_str(&format!("_{{{}}}", run.join(" "))),
            }
        }
        parts.push(s);
    }
    parts.join(" ")
}

impl fmt::Display for DisplayExpr<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for (shape, coef) in &self.0.terms {
            // assign dummy print names avoiding free label collisions
            let mut used: BTreeSet<String> = BTreeSet::new();
            let mut dummy_ids: BTreeSet<u16> = BTreeSet::new();
            for a in shape {
                for ix in a.prefix.iter().chain(a.slots.iter()) {
                    match &ix.label {
                        Label::Named(n) => {
                            used.insert(n.clone());
                        }
                        Label::Dummy(d) => {
                            dummy_ids.insert(*d);
                        }
                        Label::Jet(_) => {}
                    }
                }
            }
            let mut names: BTreeMap<u16, String> = BTreeMap::new();
            let mut pool = DUMMY_POOL
                .iter()
                .map(|s| s.to_string())
                .chain((2..).map(|n| format!("u{}", n)))
                .filter(|n| !used.contains(n));
            for d in dummy_ids {
                names.insert(d, pool.next().unwrap());
            }

            let cs = format!("{}", coef);
            let (sign, body) = if let Some(stripped) = cs.strip_prefix('-') {
                ("-", stripped.to_string())
            } else {
                ("+", cs)
            };
            if first {
                if sign == "-" {
                    write!(f, "- ")?;
                }
                first = false;
            } else {
                write!(f, " {} ", sign)?;
            }
            let coef_is_one = body == "1";
            if !coef_is_one || shape.is_empty() {
                write!(f, "{}", body)?;
                if !shape.is_empty() {
                    write!(f, " ")?;
                }
            }
            write!(f, "{}", format_term(shape, &names))?;
        }
        Ok(())
    }
}

impl TensorExpr {
    pub fn display(&self) -> DisplayExpr<'_> {
        DisplayExpr(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Scalar;

    fn ctx() -> Ctx {
        Ctx::with_standard_aux()
    }

    fn term(atoms: Vec<Atom>) -> Term {
        Term { coef: Scalar::one(), atoms }
    }

    #[test]
    fn antisym_collapse() {
        // omega_{ab} + omega_{ba} = 0
        let c = ctx();
        let mut e = TensorExpr::zero();
        e.add_term(term(vec![Atom::new(Sym::Omega, vec![Index::down("a"), Index::down("b")])]), &c)
            .unwrap();
        e.add_term(term(vec![Atom::new(Sym::Omega, vec![Index::down("b"), Index::down("a")])]), &c)
            .unwrap();
        assert!(e.is_zero());
    }

    #[test]
    fn sym_antisym_trace_zero() {
        // gInv^{uv} omega_{uv} = 0 via odd automorphism
        let c = ctx();
        let mut e = TensorExpr::zero();
        e.add_term(
            term(vec![
                Atom::new(Sym::MetricInv, vec![Index::up("u"), Index::up("v")]),
                Atom::new(Sym::Omega, vec![Index::down("u"), Index::down("v")]),
            ]),
            &c,
        )
        .unwrap();
        assert!(e.is_zero());
    }

    #[test]
    fn dummy_rename_merge() {
        // T^u S_u written with two different dummies merges with coefficient 2
        let c = ctx();
        let mut cc = c.clone();
        cc.declare("T", vec![Variance::Up], SlotSym::None, SlotType::Plain);
        cc.declare("S", vec![Variance::Down], SlotSym::None, SlotType::Plain);
        let mut e = TensorExpr::zero();
        e.add_term(
            term(vec![
                Atom::user("T", vec![Index::up("u")]),
                Atom::user("S", vec![Index::down("u")]),
            ]),
            &cc,
        )
        .unwrap();
        e.add_term(
            term(vec![
                Atom::user("T", vec![Index::up("w")]),
                Atom::user("S", vec![Index::down("w")]),
            ]),
            &cc,
        )
        .unwrap();
        assert_eq!(e.terms.len(), 1);
        assert_eq!(e.terms.values().next().unwrap(), &Scalar::from_int(2));
    }

    #[test]
    fn opposite_projections_kill() {
        let c = ctx();
        let mut e = TensorExpr::zero();
        // G slot forces Hol; pairing into Gbar slot (Anti) kills the term
        e.add_term(
            term(vec![
                Atom::with_args(Sym::G, vec![Dir::full("V")], vec![Index::up("a"), Index::up("u")]),
                Atom::with_args(Sym::Gbar, vec![Dir::full("W")], vec![Index::up("b"), Index::up("v")]),
                Atom::new(Sym::Metric, vec![Index::down("u"), Index::down("v")]),
            ]),
            &c,
        )
        .unwrap();
        // g is (1,1): u side Hol forces v side Anti, Gbar v is Anti: consistent
        assert!(!e.is_zero());

        let mut e2 = TensorExpr::zero();
        e2.add_term(
            term(vec![
                Atom::with_args(Sym::G, vec![Dir::full("V")], vec![Index::up("a"), Index::up("u")]),
                Atom::with_args(Sym::G, vec![Dir::full("W")], vec![Index::up("b"), Index::up("v")]),
                Atom::new(Sym::Metric, vec![Index::down("u"), Index::down("v")]),
            ]),
            &c,
        )
        .unwrap();
        // both Hol against a (1,1) tensor: zero
        assert!(e2.is_zero());
    }

    #[test]
    fn j_elimination_through_projection() {
        let c = ctx();
        let mut e = TensorExpr::zero();
        // J^{u}_{a} G(V)^{b v} g_{v u}: J's up slot pairs (through g) ... use direct:
        // J^{u}_{a} X_{u'} = i X_{a'} — test via user symbol with explicit proj
        let mut cc = c.clone();
        cc.declare("S", vec![Variance::Down], SlotSym::None, SlotType::Plain);
        e.add_term(
            term(vec![
                Atom::new(Sym::J, vec![Index::up("u"), Index::down("a")]),
                Atom::user("S", vec![Index::down("u").with_proj(Proj::Hol)]),
            ]),
            &cc,
        )
        .unwrap();
        assert_eq!(e.terms.len(), 1);
        let (shape, coef) = e.terms.iter().next().unwrap();
        assert_eq!(coef, &Scalar::i());
        assert_eq!(shape.len(), 1);
        assert_eq!(shape[0].sym.name(), "S");
        assert_eq!(shape[0].slots[0].proj, Proj::Hol);
        assert_eq!(shape[0].slots[0].label, Label::named("a"));
    }

    #[test]
    fn symmetrize_antisym_zero() {
        let c = ctx();
        let mut e = TensorExpr::zero();
        e.add_term(term(vec![Atom::new(Sym::Omega, vec![Index::down("a"), Index::down("b")])]), &c)
            .unwrap();
        let s = e.symmetrize(&["a", "b"], &c).unwrap();
        assert!(s.is_zero());
    }

    #[test]
    fn conjugate_involution() {
        let c = ctx();
        let mut e = TensorExpr::zero();
        e.add_term(
            Term {
                coef: Scalar::i(),
                atoms: vec![
                    Atom::with_args(Sym::G, vec![Dir::hol("V")], vec![Index::up("a"), Index::up("b")]),
                    Atom::new(Sym::Omega, vec![Index::down("a").with_proj(Proj::Hol), Index::down("c")]),
                ],
            },
            &c,
        )
        .unwrap();
        let cc = e.conjugate(&c).conjugate(&c);
        assert_eq!(e, cc);
    }

    #[test]
    fn free_index_preserved_by_symmetrize() {
        let c = ctx();
        let mut e = TensorExpr::zero();
        e.add_term(
            term(vec![Atom::user("A", vec![Index::up("a"), Index::up("b")])]),
            &c,
        )
        .unwrap();
        let s = e.symmetrize(&["a", "b"], &c).unwrap();
        assert_eq!(e.free_indices().unwrap(), s.free_indices().unwrap());
        // A is already symmetric: unchanged
        assert_eq!(e, s);
    }
}
