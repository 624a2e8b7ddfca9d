//! Parser for the expression notation.
//!
//! Grammar: terms separated by `+`/`-`; a coefficient is an optional rational
//! and a monomial in `i k t tbar lambda m` (with `/(...)` polynomial
//! denominators accepted for round-tripping engine output); atoms are
//! `name_{...}` / `name^{...}` with mixed-variance slot lists; an index is a
//! letter optionally suffixed by `'` or `''`; a covariant derivative is the
//! prefix atom `nabla_{a}` binding to the next atom; `Sym[a b](...)`
//! symmetrizes; parentheses group.
//!
//! Same-variance repeated indices are rewritten into explicit `g`/`gInv`
//! contractions at parse time, and non-natural slot variances (like
//! `R_{a b c}^{d}`) insert the metric, so the IR only carries up/down
//! pairings in each atom's natural signature.

use crate::expr::*;
use crate::scalar::{Poly, Scalar, VK, VL, VM, VT};
use std::collections::BTreeMap;

pub struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    ctx: &'a Ctx,
    /// When true, a bare `s` is the section placeholder; otherwise it is the
    /// scalar curvature.
    pub operator_context: bool,
    fresh: u32,
}

pub fn parse(src: &str, ctx: &Ctx) -> Result<TensorExpr, ExprError> {
    let mut p = Parser { src: src.as_bytes(), pos: 0, ctx, operator_context: false, fresh: 0 };
    let e = p.parse_expr()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(ExprError::Syntax(p.pos, "trailing input".into()));
    }
    Ok(e)
}

pub fn parse_operator(src: &str, ctx: &Ctx) -> Result<TensorExpr, ExprError> {
    let mut p = Parser { src: src.as_bytes(), pos: 0, ctx, operator_context: true, fresh: 0 };
    let e = p.parse_expr()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(ExprError::Syntax(p.pos, "trailing input".into()));
    }
    Ok(e)
}

enum Factor {
    Coef(Scalar),
    Atoms(Vec<Atom>),
    Sub(TensorExpr),
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && (self.src[self.pos] as char).is_whitespace() {
            self.pos += 1;
        }
    }
    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }
    fn peek_raw(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }
    fn bump(&mut self) -> Option<u8> {
        let c = self.peek();
        if c.is_some() {
            self.pos += 1;
        }
        c
    }
    fn expect(&mut self, c: u8) -> Result<(), ExprError> {
        match self.bump() {
            Some(x) if x == c => Ok(()),
            _ => Err(ExprError::Syntax(self.pos, format!("expected `{}`", c as char))),
        }
    }
    fn fresh_label(&mut self) -> String {
        self.fresh += 1;
        format!("\u{3}p{}", self.fresh)
    }

    fn parse_expr(&mut self) -> Result<TensorExpr, ExprError> {
        let mut acc = TensorExpr::zero();
        let mut sign = match self.peek() {
            Some(b'-') => {
                self.bump();
                -1
            }
            Some(b'+') => {
                self.bump();
                1
            }
            _ => 1,
        };
        loop {
            let t = self.parse_product()?;
            acc = acc.add(&t.scale(&Scalar::from_int(sign)));
            match self.peek() {
                Some(b'+') => {
                    self.bump();
                    sign = 1;
                }
                Some(b'-') => {
                    self.bump();
                    sign = -1;
                }
                _ => break,
            }
        }
        Ok(acc)
    }

    /// One additive term: product of factors.
    fn parse_product(&mut self) -> Result<TensorExpr, ExprError> {
        let mut coef = Scalar::one();
        let mut atoms: Vec<Atom> = vec![];
        let mut subs: Vec<TensorExpr> = vec![];
        let mut any = false;
        loop {
            match self.peek() {
                None | Some(b'+') | Some(b'-') | Some(b')') | Some(b',') | Some(b']') => break,
                _ => {}
            }
            any = true;
            match self.parse_factor()? {
                Factor::Coef(c) => coef = coef.mul(&c),
                Factor::Atoms(mut a) => atoms.append(&mut a),
                Factor::Sub(e) => subs.push(e),
            }
        }
        if !any {
            return Err(ExprError::Syntax(self.pos, "empty term".into()));
        }
        // same-variance contraction rewrite among the juxtaposed atoms
        self.insert_metric_contractions(&mut atoms)?;
        let mut e = TensorExpr::zero();
        e.add_term(Term { coef, atoms }, self.ctx)?;
        for s in subs {
            e = e.mul(&s, self.ctx);
        }
        Ok(e)
    }

    fn insert_metric_contractions(&mut self, atoms: &mut Vec<Atom>) -> Result<(), ExprError> {
        // a label may appear at most twice in a term
        let mut totals: BTreeMap<Label, usize> = BTreeMap::new();
        for a in atoms.iter() {
            for ix in a.prefix.iter().chain(a.slots.iter()) {
                *totals.entry(ix.label.clone()).or_insert(0) += 1;
            }
        }
        for (l, n) in &totals {
            if *n > 2 {
                return Err(ExprError::BadIndexCount(format!("{:?}", l), *n));
            }
        }
        loop {
            let mut seen: BTreeMap<(Label, Variance), usize> = BTreeMap::new();
            let mut fix: Option<(usize, bool, usize, Variance)> = None;
            'outer: for (ai, a) in atoms.iter().enumerate() {
                for (pi, ix) in a.prefix.iter().enumerate() {
                    let k = (ix.label.clone(), ix.var);
                    if seen.contains_key(&k) {
                        fix = Some((ai, true, pi, ix.var));
                        break 'outer;
                    }
                    seen.insert(k, ai);
                }
                for (si, ix) in a.slots.iter().enumerate() {
                    let k = (ix.label.clone(), ix.var);
                    if seen.contains_key(&k) {
                        fix = Some((ai, false, si, ix.var));
                        break 'outer;
                    }
                    seen.insert(k, ai);
                }
            }
            match fix {
                None => return Ok(()),
                Some((ai, in_prefix, pos, var)) => {
                    let fresh = self.fresh_label();
                    let (old, proj) = {
                        let ix = if in_prefix { &atoms[ai].prefix[pos] } else { &atoms[ai].slots[pos] };
                        (ix.label.clone(), ix.proj)
                    };
                    {
                        let ix = if in_prefix {
                            &mut atoms[ai].prefix[pos]
                        } else {
                            &mut atoms[ai].slots[pos]
                        };
                        ix.label = Label::named(&fresh);
                        ix.proj = Proj::None;
                    }
                    let old_name = match old {
                        Label::Named(n) => n,
                        other => return Err(ExprError::SameVariancePair(format!("{:?}", other))),
                    };
                    // both down: contract through gInv; both up: through g
                    match var {
                        Variance::Down => atoms.push(Atom::new(
                            Sym::MetricInv,
                            vec![
                                Index { label: Label::named(&fresh), var: Variance::Up, proj: Proj::None },
                                Index { label: Label::named(&old_name), var: Variance::Up, proj },
                            ],
                        )),
                        Variance::Up => atoms.push(Atom::new(
                            Sym::Metric,
                            vec![
                                Index { label: Label::named(&fresh), var: Variance::Down, proj: Proj::None },
                                Index { label: Label::named(&old_name), var: Variance::Down, proj },
                            ],
                        )),
                    }
                }
            }
        }
    }

    fn parse_factor(&mut self) -> Result<Factor, ExprError> {
        match self.peek() {
            Some(b'(') => {
                self.bump();
                let e = self.parse_expr()?;
                self.expect(b')')?;
                Ok(Factor::Sub(e))
            }
            Some(b'/') => {
                // denominator factor: /( poly ) [^int]
                self.bump();
                self.expect(b'(')?;
                let e = self.parse_expr()?;
                self.expect(b')')?;
                let mut pow = 1;
                if self.peek() == Some(b'^') {
                    self.bump();
                    pow = self.parse_int()?;
                }
                let p = scalar_of_expr(&e)
                    .ok_or_else(|| ExprError::Syntax(self.pos, "non-scalar denominator".into()))?;
                if !p.den.is_empty() {
                    return Err(ExprError::Syntax(self.pos, "nested denominator".into()));
                }
                let mut c = Scalar::one();
                for _ in 0..pow {
                    c = c.div_poly(&p.num);
                }
                Ok(Factor::Coef(c))
            }
            Some(c) if c.is_ascii_digit() => {
                let n = self.parse_int()?;
                if self.peek_raw() == Some(b'/') {
                    // lookahead: rational vs /( poly )
                    let save = self.pos;
                    self.bump();
                    if self.peek() == Some(b'(') {
                        self.pos = save;
                        return Ok(Factor::Coef(Scalar::from_int(n)));
                    }
                    let d = self.parse_int()?;
                    return Ok(Factor::Coef(Scalar::from_ratio(n, d)));
                }
                Ok(Factor::Coef(Scalar::from_int(n)))
            }
            Some(c) if c.is_ascii_alphabetic() || c == b'%' || c == b'$' => {
                let name = self.parse_name()?;
                // reserved scalars
                let scal = match name.as_str() {
                    "i" => Some(Scalar::i()),
                    "k" => Some(Scalar::var(VK)),
                    "t" => Some(Scalar::var(VT)),
                    "tbar" => Some(Scalar::from_poly(Poly::tbar())),
                    "lambda" => Some(Scalar::var(VL)),
                    "m" => Some(Scalar::var(VM)),
                    _ => None,
                };
                if let Some(s) = scal {
                    let mut c = s;
                    if self.peek() == Some(b'^') {
                        self.bump();
                        let e = self.parse_int()?;
                        let base = c.clone();
                        for _ in 1..e {
                            c = c.mul(&base);
                        }
                    }
                    return Ok(Factor::Coef(c));
                }
                if name == "Sym" {
                    return self.parse_symblock();
                }
                if name == "nabla" {
                    // prefix chain binding to the next atom
                    let mut prefix = vec![self.parse_prefix_index()?];
                    loop {
                        let save = self.pos;
                        self.skip_ws();
                        if self.src[self.pos..].starts_with(b"nabla") {
                            self.pos += 5;
                            prefix.push(self.parse_prefix_index()?);
                        } else {
                            self.pos = save;
                            break;
                        }
                    }
                    self.skip_ws();
                    let next = self.parse_name()?;
                    return match self.parse_named_atoms(&next)? {
                        NamedAtoms::Plain(mut atoms) => {
                            let mut full = prefix;
                            full.append(&mut atoms[0].prefix);
                            atoms[0].prefix = full;
                            Ok(Factor::Atoms(atoms))
                        }
                        NamedAtoms::Split(mut a1, mut a2) => {
                            let mut p1 = prefix.clone();
                            p1.append(&mut a1[0].prefix);
                            a1[0].prefix = p1;
                            let mut p2 = prefix;
                            p2.append(&mut a2[0].prefix);
                            a2[0].prefix = p2;
                            let mut e = TensorExpr::zero();
                            e.add_term(Term { coef: Scalar::one(), atoms: a1 }, self.ctx)?;
                            e.add_term(Term { coef: Scalar::one(), atoms: a2 }, self.ctx)?;
                            Ok(Factor::Sub(e))
                        }
                    };
                }
                match self.parse_named_atoms(&name)? {
                    NamedAtoms::Plain(atoms) => Ok(Factor::Atoms(atoms)),
                    NamedAtoms::Split(a1, a2) => {
                        let mut e = TensorExpr::zero();
                        e.add_term(Term { coef: Scalar::one(), atoms: a1 }, self.ctx)?;
                        e.add_term(Term { coef: Scalar::one(), atoms: a2 }, self.ctx)?;
                        Ok(Factor::Sub(e))
                    }
                }
            }
            _ => Err(ExprError::Syntax(self.pos, "unexpected character".into())),
        }
    }

    fn parse_prefix_index(&mut self) -> Result<Index, ExprError> {
        // _{a} or ^{a}: a raised derivative inserts gInv later (handled by
        // returning an Up index and fixing in parse_atom_body's caller is
        // overkill; only covariant derivatives appear in the corpus)
        self.skip_ws();
        match self.bump() {
            Some(b'_') => {}
            _ => return Err(ExprError::Syntax(self.pos, "expected `_{` after nabla".into())),
        }
        self.expect(b'{')?;
        let ix = self.parse_index(Variance::Down)?;
        self.expect(b'}')?;
        Ok(ix)
    }

    fn parse_symblock(&mut self) -> Result<Factor, ExprError> {
        self.expect(b'[')?;
        let mut labels = vec![];
        while self.peek() != Some(b']') {
            labels.push(self.parse_index_name()?);
        }
        self.expect(b']')?;
        self.expect(b'(')?;
        let e = self.parse_expr()?;
        self.expect(b')')?;
        let refs: Vec<&str> = labels.iter().map(|s| s.as_str()).collect();
        Ok(Factor::Sub(e.symmetrize(&refs, self.ctx)?))
    }

    fn parse_name(&mut self) -> Result<String, ExprError> {
        self.skip_ws();
        let start = self.pos;
        if self.peek_raw() == Some(b'%') || self.peek_raw() == Some(b'$') {
            self.pos += 1;
        }
        while let Some(c) = self.peek_raw() {
            if c.is_ascii_alphanumeric() {
                self.pos += 1;
            } else {
                break;
            }
        }
        if self.pos == start {
            return Err(ExprError::Syntax(self.pos, "expected name".into()));
        }
        Ok(String::from_utf8_lossy(&self.src[start..self.pos]).into_owned())
    }

    fn parse_index_name(&mut self) -> Result<String, ExprError> {
        self.parse_name()
    }

    fn parse_int(&mut self) -> Result<i64, ExprError> {
        self.skip_ws();
        let start = self.pos;
        while let Some(c) = self.peek_raw() {
            if c.is_ascii_digit() {
                self.pos += 1;
            } else {
                break;
            }
        }
        if self.pos == start {
            return Err(ExprError::Syntax(self.pos, "expected integer".into()));
        }
        String::from_utf8_lossy(&self.src[start..self.pos])
            .parse()
            .map_err(|_| ExprError::Syntax(self.pos, "bad integer".into()))
    }

    fn parse_index(&mut self, var: Variance) -> Result<Index, ExprError> {
        let name = self.parse_index_name()?;
        let mut proj = Proj::None;
        if self.peek_raw() == Some(b'\'') {
            self.pos += 1;
            proj = Proj::Hol;
            if self.peek_raw() == Some(b'\'') {
                self.pos += 1;
                proj = Proj::Anti;
            }
        }
        let label = if let Some(stripped) = name.strip_prefix('%') {
            Label::Jet(stripped.parse().map_err(|_| ExprError::Syntax(self.pos, "bad jet slot".into()))?)
        } else {
            Label::Named(name)
        };
        Ok(Index { label, var, proj })
    }

    fn parse_dir(&mut self) -> Result<Dir, ExprError> {
        let name = self.parse_name()?;
        let mut part = Part::Full;
        if self.peek_raw() == Some(b'\'') {
            self.pos += 1;
            part = Part::Hol;
            if self.peek_raw() == Some(b'\'') {
                self.pos += 1;
                part = Part::Anti;
            }
        }
        Ok(Dir { field: name, part })
    }

    /// Parse a named atom: `Gt` splits into G + Gbar, everything else is a
    /// plain atom list (the head atom plus any metric insertions).
    fn parse_named_atoms(&mut self, name: &str) -> Result<NamedAtoms, ExprError> {
        if name == "Gt" {
            let atoms = self.parse_atom_body("G")?;
            let mut bar = atoms.clone();
            bar[0].sym = Sym::Gbar;
            // the slot projections implied by G are re-derived in
            // canonicalization, so resetting them here is safe
            for ix in bar[0].slots.iter_mut() {
                ix.proj = Proj::None;
            }
            return Ok(NamedAtoms::Split(atoms, bar));
        }
        Ok(NamedAtoms::Plain(self.parse_atom_body(name)?))
    }

    /// Parse args and index lists after a symbol name; convert to natural
    /// variance with metric insertions.
    fn parse_atom_body(&mut self, name: &str) -> Result<Vec<Atom>, ExprError> {
        // arguments
        let mut args = vec![];
        if self.peek() == Some(b'(') {
            // only treat as args for symbols expecting them
            if sym_takes_args(name) {
                self.bump();
                loop {
                    args.push(self.parse_dir()?);
                    match self.bump() {
                        Some(b',') => continue,
                        Some(b')') => break,
                        _ => return Err(ExprError::Syntax(self.pos, "expected `,` or `)`".into())),
                    }
                }
            }
        }
        // index lists
        let mut given: Vec<Index> = vec![];
        loop {
            match self.peek() {
                Some(b'_') => {
                    self.bump();
                    self.expect(b'{')?;
                    while self.peek() != Some(b'}') {
                        given.push(self.parse_index(Variance::Down)?);
                    }
                    self.expect(b'}')?;
                }
                Some(b'^') => {
                    self.bump();
                    self.expect(b'{')?;
                    while self.peek() != Some(b'}') {
                        given.push(self.parse_index(Variance::Up)?);
                    }
                    self.expect(b'}')?;
                }
                _ => break,
            }
        }

        let sym = self.resolve_sym(name)?;
        let info = sym.info(self.ctx);
        if let Sym::User(n) = &sym {
            if !self.ctx.users.contains_key(n.as_ref()) {
                return Err(ExprError::UnknownSymbol(n.to_string()));
            }
        }
        if given.len() != info.slots.len() {
            return Err(ExprError::ArityMismatch(name.to_string(), info.slots.len(), given.len()));
        }
        // natural variance with metric insertion
        let mut atoms = vec![Atom { sym, args, prefix: vec![], slots: vec![] }];
        for (j, ix) in given.into_iter().enumerate() {
            let nat = info.slots[j];
            if ix.var == nat {
                atoms[0].slots.push(ix);
            } else {
                let fresh = self.fresh_label();
                atoms[0].slots.push(Index { label: Label::named(&fresh), var: nat, proj: Proj::None });
                let pair = match nat {
                    Variance::Down => Atom::new(
                        Sym::MetricInv,
                        vec![
                            Index { label: Label::named(&fresh), var: Variance::Up, proj: Proj::None },
                            ix,
                        ],
                    ),
                    Variance::Up => Atom::new(
                        Sym::Metric,
                        vec![
                            Index { label: Label::named(&fresh), var: Variance::Down, proj: Proj::None },
                            ix,
                        ],
                    ),
                };
                atoms.push(pair);
            }
        }
        Ok(atoms)
    }

    fn resolve_sym(&mut self, name: &str) -> Result<Sym, ExprError> {
        let s = match name {
            "g" => Sym::Metric,
            "gInv" => Sym::MetricInv,
            "omega" => Sym::Omega,
            "omegaInv" => Sym::OmegaInv,
            "J" => Sym::J,
            "Id" => Sym::Id,
            "R" => Sym::Riem,
            "r" => Sym::Ricci,
            "rho" => Sym::RicciForm,
            "scal" => Sym::ScalCurv,
            "s" => {
                if self.operator_context {
                    Sym::Sect
                } else {
                    Sym::ScalCurv
                }
            }
            "F" => Sym::F,
            "G" => Sym::G,
            "Gbar" => Sym::Gbar,
            "Theta" => Sym::BigTheta,
            "theta" => Sym::SmallTheta,
            "c" => Sym::CForm,
            "varF" => Sym::VarF,
            "var2F" => Sym::Var2F,
            "varG" => Sym::VarG,
            "varGbar" => Sym::VarGbar,
            other => Sym::User(other.into()),
        };
        Ok(s)
    }
}

enum NamedAtoms {
    Plain(Vec<Atom>),
    Split(Vec<Atom>, Vec<Atom>),
}

fn sym_takes_args(name: &str) -> bool {
    matches!(
        name,
        "G" | "Gbar" | "Gt" | "Theta" | "theta" | "c" | "varF" | "var2F" | "varG" | "varGbar"
    )
}

/// Extract the scalar value of a pure-scalar expression.
pub fn scalar_of_expr(e: &TensorExpr) -> Option<Scalar> {
    if e.is_zero() {
        return Some(Scalar::zero());
    }
    if e.terms.len() == 1 {
        let (shape, c) = e.terms.iter().next().unwrap();
        if shape.is_empty() {
            return Some(c.clone());
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx() -> Ctx {
        Ctx::with_standard_aux()
    }

    #[test]
    fn parse_metric_pair() {
        let c = ctx();
        let e = parse("g_{a u} gInv^{u b}", &c).unwrap();
        assert_eq!(e.terms.len(), 1);
        let free = e.free_indices().unwrap();
        assert!(free.contains(&(Label::named("a"), Variance::Down)));
        assert!(free.contains(&(Label::named("b"), Variance::Up)));
    }

    #[test]
    fn parse_projected_omega() {
        let c = ctx();
        let e = parse("omega_{a' b''}", &c).unwrap();
        assert_eq!(e.terms.len(), 1);
        let shape = e.terms.keys().next().unwrap();
        assert_eq!(shape[0].slots[0].proj, Proj::Hol);
        assert_eq!(shape[0].slots[1].proj, Proj::Anti);
        // same projection on a (1,1) form dies
        let z = parse("omega_{a' b'}", &c).unwrap();
        assert!(z.is_zero());
    }

    #[test]
    fn parse_prop14_integrand() {
        let c = ctx();
        let e = parse("G(V)^{a u} nabla_{u} G(W)^{b c}", &c).unwrap();
        assert_eq!(e.terms.len(), 1);
        let free = e.free_indices().unwrap();
        assert_eq!(free.len(), 3);
    }

    #[test]
    fn parse_mixed_variance_inserts_metric() {
        let c = ctx();
        let e = parse("R_{a b c}^{d}", &c).unwrap();
        let shape = e.terms.keys().next().unwrap();
        assert_eq!(shape.len(), 2);
        assert!(shape.iter().any(|a| a.sym == Sym::MetricInv));
    }

    #[test]
    fn parse_same_variance_contraction() {
        let c = ctx();
        // r_{ab} = R_{uabu}: repeated subscript contracts through gInv
        let e = parse("R_{u a b u}", &c).unwrap();
        let shape = e.terms.keys().next().unwrap();
        assert!(shape.iter().any(|a| a.sym == Sym::MetricInv));
        let free = e.free_indices().unwrap();
        assert_eq!(free.len(), 2);
    }

    #[test]
    fn parse_coefficients() {
        let c = ctx();
        let e = parse("3/4 i k^2 g_{a b} - 1/2 t omega_{a b}", &c).unwrap();
        assert_eq!(e.terms.len(), 2);
        let e2 = parse("2 k /(4 k + 2 lambda) g_{a b}", &c).unwrap();
        assert_eq!(e2.terms.len(), 1);
        // 2k/(4k+2lambda) = k/(2k+lambda)
        let coef = e2.terms.values().next().unwrap();
        let expect = parse("k /(2 k + lambda) g_{a b}", &c).unwrap();
        assert_eq!(coef, expect.terms.values().next().unwrap());
    }

    #[test]
    fn parse_sym_block() {
        let c = ctx();
        let e = parse("Sym[a b](omega_{a b})", &c).unwrap();
        assert!(e.is_zero());
        let e2 = parse("Sym[a b](A^{a u} X^{b} g_{u c}) - 1/2 A^{a u} X^{b} g_{u c} - 1/2 A^{b u} X^{a} g_{u c}", &c).unwrap();
        assert!(e2.is_zero());
    }

    #[test]
    fn roundtrip_print_parse() {
        let c = ctx();
        for src in [
            "g_{a u} gInv^{u b}",
            "G(V)^{a u} nabla_{u} G(W)^{b c}",
            "omega_{a' b''} + 2 i g_{a b}",
            "nabla_{u} nabla_{v} F gInv^{u v}",
            "R_{a b c d} omegaInv^{c d}",
            "varF(V') var2F(V',W'')",
        ] {
            let e = parse(src, &c).unwrap();
            let printed = format!("{}", e.display());
            let back = parse(&printed, &c).unwrap();
            assert_eq!(e, back, "roundtrip failed for `{}` -> `{}`", src, printed);
        }
    }

    #[test]
    fn unknown_symbol_errors() {
        let c = ctx();
        assert!(matches!(
            parse("Q_{a b}", &c),
            Err(ExprError::UnknownSymbol(_)) | Err(ExprError::ArityMismatch(..))
        ));
    }

    #[test]
    fn triple_index_errors() {
        let c = ctx();
        let r = parse("X^{u} Y^{u} g_{u u}", &c);
        assert!(r.is_err());
    }
}
