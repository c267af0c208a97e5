//! Polynomials in the ambient coordinates `x1..x4`, restricted to S³.
//!
//! A prescribed curvature function is stored as an ambient polynomial so that
//! every derivative used by the critical-point analysis is exact.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dot4, Rotation4, SpherePoint, Vec4};

/// Exponents of `x1..x4`.
pub type MultiIndex = [u32; 4];

/// A real polynomial in four variables, kept in canonical form (sorted
/// monomials, no zero coefficients).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct AmbientPolynomial {
    terms: BTreeMap<MultiIndex, f64>,
}

impl AmbientPolynomial {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        let mut p = Self::zero();
        p.add_term(c, [0; 4]);
        p
    }

    /// The coordinate function `x_{axis+1}`.
    pub fn coordinate(axis: usize) -> Self {
        let mut e = [0; 4];
        e[axis] = 1;
        let mut p = Self::zero();
        p.add_term(1.0, e);
        p
    }

    pub fn from_terms<I: IntoIterator<Item = (f64, MultiIndex)>>(terms: I) -> Self {
        let mut p = Self::zero();
        for (c, e) in terms {
            p.add_term(c, e);
        }
        p
    }

    fn add_term(&mut self, c: f64, e: MultiIndex) {
        if c == 0.0 {
            return;
        }
        let entry = self.terms.entry(e).or_insert(0.0);
        *entry += c;
        if *entry == 0.0 {
            self.terms.remove(&e);
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (f64, &MultiIndex)> {
        self.terms.iter().map(|(e, c)| (*c, e))
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|e| e.iter().sum()).max().unwrap_or(0)
    }

    pub fn is_constant(&self) -> bool {
        self.terms.keys().all(|e| e.iter().all(|&k| k == 0))
    }

    pub fn eval(&self, x: &Vec4) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| c * monomial(x, e))
            .sum()
    }

    pub fn eval_at(&self, p: &SpherePoint) -> f64 {
        self.eval(p.coords())
    }

    /// Partial derivative with respect to `x_{axis+1}`.
    pub fn partial(&self, axis: usize) -> Self {
        let mut out = Self::zero();
        for (e, c) in &self.terms {
            if e[axis] > 0 {
                let mut f = *e;
                f[axis] -= 1;
                out.add_term(c * e[axis] as f64, f);
            }
        }
        out
    }

    pub fn gradient(&self, x: &Vec4) -> Vec4 {
        let mut g = [0.0; 4];
        for (e, c) in &self.terms {
            for (a, ga) in g.iter_mut().enumerate() {
                if e[a] > 0 {
                    let mut f = *e;
                    f[a] -= 1;
                    *ga += c * e[a] as f64 * monomial(x, &f);
                }
            }
        }
        g
    }

    pub fn hessian(&self, x: &Vec4) -> [[f64; 4]; 4] {
        let mut h = [[0.0; 4]; 4];
        for (e, c) in &self.terms {
            for a in 0..4 {
                if e[a] == 0 {
                    continue;
                }
                for b in a..4 {
                    let mut f = *e;
                    let mut k = c * e[a] as f64;
                    f[a] -= 1;
                    if f[b] == 0 {
                        continue;
                    }
                    k *= f[b] as f64;
                    f[b] -= 1;
                    h[a][b] += k * monomial(x, &f);
                }
            }
        }
        for a in 0..4 {
            for b in 0..a {
                h[a][b] = h[b][a];
            }
        }
        h
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self::from_terms(self.terms.iter().map(|(e, k)| (k * c, *e)))
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (e, c) in &other.terms {
            out.add_term(*c, *e);
        }
        out
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut out = Self::zero();
        for (e1, c1) in &self.terms {
            for (e2, c2) in &other.terms {
                let e = [e1[0] + e2[0], e1[1] + e2[1], e1[2] + e2[2], e1[3] + e2[3]];
                out.add_term(c1 * c2, e);
            }
        }
        out
    }

    pub fn pow(&self, n: u32) -> Self {
        let mut out = Self::constant(1.0);
        for _ in 0..n {
            out = out.mul(self);
        }
        out
    }

    /// The polynomial `x ↦ self(R x)`.
    pub fn compose_rotation(&self, r: &Rotation4) -> Self {
        let m = r.matrix();
        let lin: Vec<AmbientPolynomial> = (0..4)
            .map(|i| Self::from_terms((0..4).map(|j| (m[i][j], unit_index(j)))))
            .collect();
        let mut out = Self::zero();
        for (e, c) in &self.terms {
            let mut t = Self::constant(*c);
            for (i, li) in lin.iter().enumerate() {
                if e[i] > 0 {
                    t = t.mul(&li.pow(e[i]));
                }
            }
            out = out.add(&t);
        }
        out.prune(1e-15 * self.max_abs_coeff().max(1e-300))
    }

    fn max_abs_coeff(&self) -> f64 {
        self.terms.values().fold(0.0, |a, c| a.max(c.abs()))
    }

    fn prune(mut self, tol: f64) -> Self {
        self.terms.retain(|_, c| c.abs() > tol);
        self
    }
}

fn unit_index(j: usize) -> MultiIndex {
    let mut e = [0; 4];
    e[j] = 1;
    e
}

#[inline]
fn monomial(x: &Vec4, e: &MultiIndex) -> f64 {
    let mut v = 1.0;
    for k in 0..4 {
        if e[k] > 0 {
            v *= x[k].powi(e[k] as i32);
        }
    }
    v
}

impl fmt::Display for AmbientPolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        // Highest total degree first, then lexicographic.
        let mut terms: Vec<_> = self.terms.iter().collect();
        terms.sort_by(|a, b| {
            let da: u32 = a.0.iter().sum();
            let db: u32 = b.0.iter().sum();
            db.cmp(&da).then(b.0.cmp(a.0))
        });
        for (i, (e, c)) in terms.iter().enumerate() {
            let c = **c;
            let is_const = e.iter().all(|&k| k == 0);
            let mag = c.abs();
            if i == 0 {
                if c < 0.0 {
                    write!(f, "-")?;
                }
            } else if c < 0.0 {
                write!(f, " - ")?;
            } else {
                write!(f, " + ")?;
            }
            let mut first = true;
            if is_const || mag != 1.0 {
                write!(f, "{mag}")?;
                first = false;
            }
            for (k, &p) in e.iter().enumerate() {
                if p == 0 {
                    continue;
                }
                if !first {
                    write!(f, "*")?;
                }
                first = false;
                write!(f, "x{}", k + 1)?;
                if p > 1 {
                    write!(f, "^{p}")?;
                }
            }
        }
        Ok(())
    }
}

impl From<AmbientPolynomial> for String {
    fn from(p: AmbientPolynomial) -> String {
        p.to_string()
    }
}

impl TryFrom<String> for AmbientPolynomial {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl FromStr for AmbientPolynomial {
    type Err = Error;

    /// Parses expressions such as `"x4 + 2"` or `"2*x1^2*x3 - x2 + 2"`.
    /// Parentheses, unary signs, and the Unicode minus `−` are accepted;
    /// exponents must be non-negative integers.
    fn from_str(s: &str) -> Result<Self> {
        let tokens = tokenize(s)?;
        let mut parser = Parser { tokens, pos: 0, len: s.chars().count() };
        let p = parser.expr()?;
        if let Some(tok) = parser.peek() {
            return Err(parse_err("unexpected trailing input", tok.col));
        }
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Var(usize),
    Plus,
    Minus,
    Star,
    Caret,
    LParen,
    RParen,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    col: usize,
}

fn parse_err(message: &str, column: usize) -> Error {
    Error::Parse { message: message.to_string(), column }
}

fn tokenize(s: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = s.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        match c {
            ' ' | '\t' => {
                i += 1;
            }
            '+' => {
                out.push(Token { tok: Tok::Plus, col });
                i += 1;
            }
            '-' | '−' => {
                out.push(Token { tok: Tok::Minus, col });
                i += 1;
            }
            '*' => {
                out.push(Token { tok: Tok::Star, col });
                i += 1;
            }
            '^' => {
                out.push(Token { tok: Tok::Caret, col });
                i += 1;
            }
            '(' => {
                out.push(Token { tok: Tok::LParen, col });
                i += 1;
            }
            ')' => {
                out.push(Token { tok: Tok::RParen, col });
                i += 1;
            }
            'x' | 'X' => {
                let d = chars.get(i + 1).and_then(|d| d.to_digit(10));
                match d {
                    Some(k @ 1..=4) => {
                        out.push(Token { tok: Tok::Var(k as usize - 1), col });
                        i += 2;
                    }
                    _ => return Err(parse_err("expected variable x1, x2, x3 or x4", col)),
                }
            }
            c if c.is_ascii_digit() || c == '.' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].is_ascii_digit() {
                        i = j;
                        while i < chars.len() && chars[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text: String = chars[start..i].iter().collect();
                let v: f64 = text
                    .parse()
                    .map_err(|_| parse_err(&format!("invalid number '{text}'"), col))?;
                out.push(Token { tok: Tok::Num(v), col });
            }
            _ => return Err(parse_err(&format!("unexpected character '{c}'"), col)),
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    len: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn end_col(&self) -> usize {
        self.len + 1
    }

    // expr := term (('+'|'-') term)*
    fn expr(&mut self) -> Result<AmbientPolynomial> {
        let mut acc = self.term()?;
        while let Some(t) = self.peek() {
            match t.tok {
                Tok::Plus => {
                    self.pos += 1;
                    acc = acc.add(&self.term()?);
                }
                Tok::Minus => {
                    self.pos += 1;
                    acc = acc.add(&self.term()?.scaled(-1.0));
                }
                _ => break,
            }
        }
        Ok(acc)
    }

    // term := unary ('*' unary)*
    fn term(&mut self) -> Result<AmbientPolynomial> {
        let mut acc = self.unary()?;
        while let Some(Tok::Star) = self.peek().map(|t| &t.tok) {
            self.pos += 1;
            acc = acc.mul(&self.unary()?);
        }
        Ok(acc)
    }

    fn unary(&mut self) -> Result<AmbientPolynomial> {
        match self.peek().map(|t| &t.tok) {
            Some(Tok::Minus) => {
                self.pos += 1;
                Ok(self.unary()?.scaled(-1.0))
            }
            Some(Tok::Plus) => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    // power := atom ('^' integer)?
    fn power(&mut self) -> Result<AmbientPolynomial> {
        let base = self.atom()?;
        if let Some(Tok::Caret) = self.peek().map(|t| &t.tok) {
            self.pos += 1;
            let end = self.end_col();
            match self.next() {
                Some(Token { tok: Tok::Num(v), col }) => {
                    if v < 0.0 || v.fract() != 0.0 || v > 64.0 {
                        return Err(parse_err("exponent must be an integer in 0..=64", col));
                    }
                    Ok(base.pow(v as u32))
                }
                Some(t) => Err(parse_err("expected integer exponent", t.col)),
                None => Err(parse_err("expected integer exponent", end)),
            }
        } else {
            Ok(base)
        }
    }

    fn atom(&mut self) -> Result<AmbientPolynomial> {
        let end = self.end_col();
        match self.next() {
            Some(Token { tok: Tok::Num(v), .. }) => Ok(AmbientPolynomial::constant(v)),
            Some(Token { tok: Tok::Var(k), .. }) => Ok(AmbientPolynomial::coordinate(k)),
            Some(Token { tok: Tok::LParen, col }) => {
                let inner = self.expr()?;
                match self.next() {
                    Some(Token { tok: Tok::RParen, .. }) => Ok(inner),
                    Some(t) => Err(parse_err("expected ')'", t.col)),
                    None => Err(parse_err(&format!("unclosed '(' opened at column {col}"), end)),
                }
            }
            Some(t) => Err(parse_err("expected a number, variable or '('", t.col)),
            None => Err(parse_err("unexpected end of expression", end)),
        }
    }
}

/// Value and intrinsic derivatives of a polynomial restricted to S³.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphereDerivatives {
    pub value: f64,
    /// Tangential gradient as an ambient vector orthogonal to the point.
    pub gradient: Vec4,
    /// Covariant Hessian in the frame `frame`.
    pub hessian: [[f64; 3]; 3],
    pub frame: [Vec4; 3],
    pub laplacian: f64,
}

/// Restricts the ambient derivatives of `k` to the sphere at `p`.
///
/// With `K̃` the ambient polynomial, the sphere gradient is `(I − ppᵀ)∇K̃`,
/// the covariant Hessian on tangent vectors is `uᵀ∇²K̃ v − (p·∇K̃)(u·v)`,
/// and the Laplace–Beltrami operator is `ΔK̃ − pᵀ∇²K̃ p − 3 p·∇K̃`.
pub fn sphere_derivatives(k: &AmbientPolynomial, p: &SpherePoint) -> SphereDerivatives {
    let x = p.coords();
    let value = k.eval(x);
    let g = k.gradient(x);
    let h = k.hessian(x);
    let radial = dot4(x, &g);
    let gradient = p.project_tangent(&g);
    let frame = p.tangent_frame();
    let mut hessian = [[0.0; 3]; 3];
    for a in 0..3 {
        let hu = mat_vec(&h, &frame[a]);
        for b in 0..3 {
            hessian[a][b] = dot4(&hu, &frame[b]) - if a == b { radial } else { 0.0 };
        }
    }
    let trace: f64 = (0..4).map(|i| h[i][i]).sum();
    let hpp = dot4(&mat_vec(&h, x), x);
    let laplacian = trace - hpp - 3.0 * radial;
    SphereDerivatives { value, gradient, hessian, frame, laplacian }
}

fn mat_vec(h: &[[f64; 4]; 4], v: &Vec4) -> Vec4 {
    [dot4(&h[0], v), dot4(&h[1], v), dot4(&h[2], v), dot4(&h[3], v)]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_examples() {
        let k: AmbientPolynomial = "x4 + 2".parse().unwrap();
        assert_eq!(k.eval(&[0.0, 0.0, 0.0, 1.0]), 3.0);
        let q: AmbientPolynomial = "2*x1^2*x3 − x2 + 2".parse().unwrap();
        assert_eq!(q.eval(&[1.0, 3.0, 2.0, 0.0]), 2.0 * 2.0 - 3.0 + 2.0);
        assert_eq!(q.degree(), 3);
        let r: AmbientPolynomial = "-(x1 - 1)^2 + 1.5e0".parse().unwrap();
        assert_eq!(r.eval(&[3.0, 0.0, 0.0, 0.0]), -4.0 + 1.5);
    }

    #[test]
    fn parse_errors_carry_columns() {
        match "x4 + y".parse::<AmbientPolynomial>() {
            Err(Error::Parse { column, .. }) => assert_eq!(column, 6),
            other => panic!("{other:?}"),
        }
        match "x5".parse::<AmbientPolynomial>() {
            Err(Error::Parse { column, .. }) => assert_eq!(column, 1),
            other => panic!("{other:?}"),
        }
        assert!("x1 +".parse::<AmbientPolynomial>().is_err());
        assert!("(x1".parse::<AmbientPolynomial>().is_err());
        assert!("x1^0.5".parse::<AmbientPolynomial>().is_err());
    }

    #[test]
    fn display_round_trips() {
        for s in ["x4 + 2", "2*x1^2*x3 - x2 + 2", "-0.5*x1*x2 + x3^3", "7", "0"] {
            let p: AmbientPolynomial = s.parse().unwrap();
            let back: AmbientPolynomial = p.to_string().parse().unwrap();
            assert_eq!(p, back, "{s} -> {p}");
        }
    }

    #[test]
    fn derivatives_of_height_function() {
        let k: AmbientPolynomial = "x4 + 2".parse().unwrap();
        let n = sphere_derivatives(&k, &SpherePoint::north());
        assert_eq!(n.value, 3.0);
        assert_eq!(n.gradient, [0.0; 4]);
        assert!((n.laplacian + 3.0).abs() < 1e-15);
        let s = sphere_derivatives(&k, &SpherePoint::south());
        assert_eq!(s.value, 1.0);
        assert!((s.laplacian - 3.0).abs() < 1e-15);
        let c = sphere_derivatives(&AmbientPolynomial::constant(1.0), &SpherePoint::axis(0));
        assert_eq!(c.laplacian, 0.0);
        assert_eq!(c.gradient, [0.0; 4]);
    }

    #[test]
    fn hessian_trace_is_laplacian() {
        let k: AmbientPolynomial = "x1^2*x2 - 3*x3*x4 + x4^3 + x2".parse().unwrap();
        let p = SpherePoint::normalize([0.3, -0.7, 0.2, 0.5]).unwrap();
        let d = sphere_derivatives(&k, &p);
        let tr = d.hessian[0][0] + d.hessian[1][1] + d.hessian[2][2];
        assert!((tr - d.laplacian).abs() < 1e-12);
    }

    #[test]
    fn rotation_composition_matches_pointwise() {
        let k: AmbientPolynomial = "x1^2*x2 - 3*x3*x4 + x4^3 + 2".parse().unwrap();
        let r = Rotation4::plane(0, 3, 0.7)
            .unwrap()
            .compose(&Rotation4::plane(1, 2, -1.3).unwrap());
        let kr = k.compose_rotation(&r);
        let x = [0.1, 0.5, -0.3, 0.8];
        assert!((kr.eval(&x) - k.eval(&r.apply_vec(&x))).abs() < 1e-12);
    }
}
