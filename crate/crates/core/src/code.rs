//! CSS codes: bivariate-bicycle construction, arbitrary check matrices and
//! paired logical operator bases.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::gf2::{BitMatrix, BitVec};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CodeError {
    #[error("bivariate-bicycle dimensions must be positive (got l={l}, m={m})")]
    BadDimensions { l: usize, m: usize },
    #[error("polynomial {0} has no terms")]
    EmptyPolynomial(&'static str),
    #[error("polynomial {poly} repeats monomial {monomial}")]
    DuplicateMonomial { poly: &'static str, monomial: Monomial },
    #[error("CSS condition violated: X-check {x_row} and Z-check {z_row} overlap on an odd number of qubits")]
    CssViolation { x_row: usize, z_row: usize },
    #[error("check matrices disagree on qubit count ({hx} vs {hz})")]
    QubitCountMismatch { hx: usize, hz: usize },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// A term `x^a y^b` of a bivariate polynomial over `Z_l x Z_m`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Monomial {
    pub x_power: usize,
    pub y_power: usize,
}

impl Monomial {
    pub const fn new(x_power: usize, y_power: usize) -> Self {
        Self { x_power, y_power }
    }

    fn reduce(self, l: usize, m: usize) -> Self {
        Self::new(self.x_power % l, self.y_power % m)
    }

    /// Image of group element `i = (i / m, i % m)` under the shift `x^a y^b`.
    #[inline]
    pub fn apply(self, i: usize, l: usize, m: usize) -> usize {
        let (a, b) = (i / m, i % m);
        ((a + self.x_power) % l) * m + (b + self.y_power) % m
    }

    #[inline]
    pub fn apply_inverse(self, i: usize, l: usize, m: usize) -> usize {
        let (a, b) = (i / m, i % m);
        ((a + l - self.x_power % l) % l) * m + (b + m - self.y_power % m) % m
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.x_power, self.y_power) {
            (0, 0) => write!(f, "1"),
            (a, 0) => write!(f, "x^{a}"),
            (0, b) => write!(f, "y^{b}"),
            (a, b) => write!(f, "x^{a}*y^{b}"),
        }
    }
}

impl FromStr for Monomial {
    type Err = String;

    /// Accepts `1`, `x`, `y^2`, `x^3*y`, `x^a*y^b` (either factor order).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "1" {
            return Ok(Self::new(0, 0));
        }
        let mut mono = Self::new(0, 0);
        let mut seen = (false, false);
        for factor in s.split('*') {
            let factor = factor.trim();
            let (var, pow) = match factor.split_once('^') {
                Some((v, p)) => (v.trim(), p.trim().parse::<usize>().map_err(|e| format!("bad exponent in `{s}`: {e}"))?),
                None => (factor, 1),
            };
            match var {
                "x" if !seen.0 => {
                    mono.x_power = pow;
                    seen.0 = true;
                }
                "y" if !seen.1 => {
                    mono.y_power = pow;
                    seen.1 = true;
                }
                _ => return Err(format!("bad monomial `{s}`")),
            }
        }
        Ok(mono)
    }
}

/// Parses a monomial list such as `x^3 + y + y^2` or `x^3, y, y^2`.
pub fn parse_polynomial(s: &str) -> Result<Vec<Monomial>, String> {
    s.split(['+', ','])
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(Monomial::from_str)
        .collect()
}

/// Structure of a bivariate-bicycle code, kept so that schedules can address
/// check neighbors by polynomial term.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BbLayout {
    pub l: usize,
    pub m: usize,
    pub a_terms: Vec<Monomial>,
    pub b_terms: Vec<Monomial>,
}

impl BbLayout {
    pub fn block_size(&self) -> usize {
        self.l * self.m
    }

    /// Data qubit reached by X-check `check` through term `k` of A (`is_a`) or B.
    pub fn x_check_neighbor(&self, check: usize, is_a: bool, k: usize) -> usize {
        if is_a {
            self.a_terms[k].apply(check, self.l, self.m)
        } else {
            self.block_size() + self.b_terms[k].apply(check, self.l, self.m)
        }
    }

    /// Data qubit reached by Z-check `check` through the transpose of term `k`.
    /// B terms land in the left block, A terms in the right block.
    pub fn z_check_neighbor(&self, check: usize, is_a: bool, k: usize) -> usize {
        if is_a {
            self.block_size() + self.a_terms[k].apply_inverse(check, self.l, self.m)
        } else {
            self.b_terms[k].apply_inverse(check, self.l, self.m)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CssCode {
    pub n: usize,
    pub k: usize,
    pub hx: BitMatrix,
    pub hz: BitMatrix,
    /// Logical X supports, paired with `lz` so that `lx[i]·lz[j] = δ_ij`.
    pub lx: Vec<BitVec>,
    pub lz: Vec<BitVec>,
    pub bb: Option<BbLayout>,
}

impl CssCode {
    /// Validates the CSS condition and computes a paired logical basis.
    pub fn new(hx: BitMatrix, hz: BitMatrix) -> Result<Self, CodeError> {
        if hx.n_cols() != hz.n_cols() {
            return Err(CodeError::QubitCountMismatch {
                hx: hx.n_cols(),
                hz: hz.n_cols(),
            });
        }
        check_css(&hx, &hz)?;
        let (lx, lz) = compute_logicals(&hx, &hz)?;
        Ok(Self {
            n: hx.n_cols(),
            k: lx.len(),
            hx,
            hz,
            lx,
            lz,
            bb: None,
        })
    }

    pub fn n_x_checks(&self) -> usize {
        self.hx.n_rows()
    }

    pub fn n_z_checks(&self) -> usize {
        self.hz.n_rows()
    }

    pub fn n_checks(&self) -> usize {
        self.n_x_checks() + self.n_z_checks()
    }

    /// Parities of `x_error` against every logical Z (i.e. which logical X flips it causes).
    pub fn x_logical_action(&self, x_error: &BitVec) -> BitVec {
        BitVec::from_bools(&self.lz.iter().map(|l| l.dot(x_error)).collect::<Vec<_>>())
    }

    /// Parities of `z_error` against every logical X.
    pub fn z_logical_action(&self, z_error: &BitVec) -> BitVec {
        BitVec::from_bools(&self.lx.iter().map(|l| l.dot(z_error)).collect::<Vec<_>>())
    }

    /// Writes the code in the `css` text format.
    pub fn to_css_text(&self) -> String {
        let mut out = format!("css {} {} {}\n", self.n_x_checks(), self.n_z_checks(), self.n);
        for h in [&self.hx, &self.hz] {
            for r in 0..h.n_rows() {
                let line: Vec<String> = h.row_support(r).iter().map(|q| q.to_string()).collect();
                out.push_str(&line.join(" "));
                out.push('\n');
            }
        }
        out
    }
}

fn check_css(hx: &BitMatrix, hz: &BitMatrix) -> Result<(), CodeError> {
    let prod = hx.mul(&hz.transpose());
    match prod.entries().first() {
        Some(&(x_row, z_row)) => Err(CodeError::CssViolation { x_row, z_row }),
        None => Ok(()),
    }
}

fn shift_sum(l: usize, m: usize, terms: &[Monomial], transpose: bool) -> BitMatrix {
    let size = l * m;
    let mut mat = BitMatrix::zeros(size, size);
    for t in terms {
        for i in 0..size {
            let j = t.apply(i, l, m);
            if transpose {
                mat.toggle(j, i);
            } else {
                mat.toggle(i, j);
            }
        }
    }
    mat
}

fn check_terms(poly: &'static str, terms: &[Monomial]) -> Result<(), CodeError> {
    if terms.is_empty() {
        return Err(CodeError::EmptyPolynomial(poly));
    }
    for (i, t) in terms.iter().enumerate() {
        if terms[..i].contains(t) {
            return Err(CodeError::DuplicateMonomial { poly, monomial: *t });
        }
    }
    Ok(())
}

/// Bivariate-bicycle code with `H_X = [A | B]` and `H_Z = [Bᵀ | Aᵀ]`, where `A`
/// and `B` are sums of monomials in the commuting shifts `x = S_l ⊗ I_m`,
/// `y = I_l ⊗ S_m`.
pub fn build_bb_code(l: usize, m: usize, a_terms: &[Monomial], b_terms: &[Monomial]) -> Result<CssCode, CodeError> {
    if l == 0 || m == 0 {
        return Err(CodeError::BadDimensions { l, m });
    }
    let a_terms: Vec<Monomial> = a_terms.iter().map(|t| t.reduce(l, m)).collect();
    let b_terms: Vec<Monomial> = b_terms.iter().map(|t| t.reduce(l, m)).collect();
    check_terms("A", &a_terms)?;
    check_terms("B", &b_terms)?;

    let a = shift_sum(l, m, &a_terms, false);
    let b = shift_sum(l, m, &b_terms, false);
    let hx = a.hstack(&b);
    let hz = shift_sum(l, m, &b_terms, true).hstack(&shift_sum(l, m, &a_terms, true));
    let mut code = CssCode::new(hx, hz)?;
    code.bb = Some(BbLayout { l, m, a_terms, b_terms });
    Ok(code)
}

pub const GROSS_A: [Monomial; 3] = [Monomial::new(3, 0), Monomial::new(0, 1), Monomial::new(0, 2)];
pub const GROSS_B: [Monomial; 3] = [Monomial::new(0, 3), Monomial::new(1, 0), Monomial::new(2, 0)];

/// The [[144, 12]] Gross code: `l = 12`, `m = 6`, `A = x³ + y + y²`, `B = y³ + x + x²`.
pub fn gross_code() -> CssCode {
    build_bb_code(12, 6, &GROSS_A, &GROSS_B).expect("Gross code parameters are valid")
}

/// The [[7, 1, 3]] Steane code (both check matrices are the Hamming(7,4) checks).
pub fn steane_code() -> CssCode {
    let h = BitMatrix::from_row_supports(7, &[vec![3, 4, 5, 6], vec![1, 2, 5, 6], vec![0, 2, 4, 6]]);
    CssCode::new(h.clone(), h).expect("Steane code is CSS")
}

/// Paired logical bases `(L_X, L_Z)`.
///
/// `L_X` spans `ker(H_Z) / rowspace(H_X)` and `L_Z` spans `ker(H_X) / rowspace(H_Z)`;
/// `L_Z` is then transformed so that `L_X · L_Zᵀ = I`.
pub fn compute_logicals(hx: &BitMatrix, hz: &BitMatrix) -> Result<(Vec<BitVec>, Vec<BitVec>), CodeError> {
    check_css(hx, hz)?;
    let lx = quotient_basis(hz, hx);
    let lz = quotient_basis(hx, hz);
    debug_assert_eq!(lx.len(), lz.len());
    let k = lx.len();
    if k == 0 {
        return Ok((lx, lz));
    }
    let n = hx.n_cols();
    let lx_mat = BitMatrix::from_rows(n, &lx);
    let lz_mat = BitMatrix::from_rows(n, &lz);
    let pairing = lx_mat.mul(&lz_mat.transpose());
    let inv = pairing
        .inverse()
        .expect("pairing of complementary logical bases is nondegenerate");
    let lz_mat = inv.transpose().mul(&lz_mat);
    Ok((lx, lz_mat.rows().collect()))
}

/// Vectors of `ker(annihilator)` completing `rowspace(stabilizers)` to a basis.
fn quotient_basis(annihilator: &BitMatrix, stabilizers: &BitMatrix) -> Vec<BitVec> {
    let n = annihilator.n_cols();
    let mut span = stabilizers.clone();
    let mut rank = span.rank();
    let mut out = Vec::new();
    for v in annihilator.nullspace() {
        let candidate = span.vstack(&BitMatrix::from_rows(n, std::slice::from_ref(&v)));
        let r = candidate.rank();
        if r > rank {
            span = candidate;
            rank = r;
            out.push(v);
        }
    }
    out
}

/// Loads a code definition.
///
/// Two formats are accepted. The explicit form:
///
/// ```text
/// css <n_x_checks> <n_z_checks> <n_qubits>
/// <qubit indices of X-check 0>
/// ...
/// <qubit indices of Z-check 0>
/// ...
/// ```
///
/// and the bivariate-bicycle form:
///
/// ```text
/// bb <l> <m>
/// A: x^3 + y + y^2
/// B: y^3 + x + x^2
/// ```
///
/// Blank lines and `#` comments are ignored.
pub fn load_css_code(text: &str) -> Result<CssCode, CodeError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());
    let (hline, header) = lines.next().ok_or(CodeError::Parse {
        line: 0,
        msg: "empty code definition".into(),
    })?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let perr = |line: usize, msg: String| CodeError::Parse { line, msg };
    let num = |line: usize, s: &str| s.parse::<usize>().map_err(|e| perr(line, format!("bad number `{s}`: {e}")));

    match fields.first().copied() {
        Some("css") => {
            if fields.len() != 4 {
                return Err(perr(hline, "expected `css n_x_checks n_z_checks n_qubits`".into()));
            }
            let (nx, nz, n) = (num(hline, fields[1])?, num(hline, fields[2])?, num(hline, fields[3])?);
            let mut rows = Vec::with_capacity(nx + nz);
            for (line, l) in lines.by_ref().take(nx + nz) {
                let mut support = Vec::new();
                for tok in l.split(|c: char| c.is_whitespace() || c == ',').filter(|t| !t.is_empty()) {
                    let q = num(line, tok)?;
                    if q >= n {
                        return Err(perr(line, format!("qubit {q} out of range for n = {n}")));
                    }
                    if support.contains(&q) {
                        return Err(perr(line, format!("qubit {q} repeated")));
                    }
                    support.push(q);
                }
                rows.push(support);
            }
            if rows.len() != nx + nz {
                return Err(perr(0, format!("expected {} check lines, found {}", nx + nz, rows.len())));
            }
            if let Some((line, _)) = lines.next() {
                return Err(perr(line, "trailing content after check lines".into()));
            }
            let hx = BitMatrix::from_row_supports(n, &rows[..nx]);
            let hz = BitMatrix::from_row_supports(n, &rows[nx..]);
            CssCode::new(hx, hz)
        }
        Some("bb") => {
            if fields.len() != 3 {
                return Err(perr(hline, "expected `bb l m`".into()));
            }
            let (l, m) = (num(hline, fields[1])?, num(hline, fields[2])?);
            let mut a = None;
            let mut b = None;
            for (line, text) in lines {
                let (key, poly) = text
                    .split_once(':')
                    .ok_or_else(|| perr(line, "expected `A: ...` or `B: ...`".into()))?;
                let terms = parse_polynomial(poly).map_err(|e| perr(line, e))?;
                match key.trim() {
                    "A" => a = Some(terms),
                    "B" => b = Some(terms),
                    other => return Err(perr(line, format!("unknown polynomial `{other}`"))),
                }
            }
            let a = a.ok_or_else(|| perr(0, "missing polynomial A".into()))?;
            let b = b.ok_or_else(|| perr(0, "missing polynomial B".into()))?;
            build_bb_code(l, m, &a, &b)
        }
        _ => Err(perr(hline, format!("unknown code header `{header}`"))),
    }
}
