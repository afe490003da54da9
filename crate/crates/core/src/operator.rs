//! Truncations of λ_f, the Dirac multiplier D = M_𝕃 and commutators, operator
//! norms, the seminorm L_D(f) = ‖[D, λ_f]‖ as a certified bracket, and the
//! seminorm J_D(f) = sup_r r‖(I − M_{2r}) λ_f M_r‖ computed exactly.
//!
//! Block norms are computed on the sparse kernel: the bipartite graph of
//! nonzero entries is split into connected components and each component's
//! Gram matrix on its smaller side is diagonalized densely.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::algebra::AlgebraElement;
use crate::error::{QmError, Result};
use crate::group::GroupElement;
use crate::length::{dedup_sorted, BallTable, LengthFunction};

/// Default cap on the row count of a dense truncation.
pub const DEFAULT_ROW_CAP: usize = 20_000;
/// Components whose smaller side exceeds this size use power iteration.
pub const POWER_THRESHOLD: usize = 2_000;
const POWER_MAX_ITERS: usize = 10_000;
const POWER_REL_TOL: f64 = 1e-12;
const POWER_SEED: u64 = 0x51_6d_65_74;
/// Relative slack used when deciding that a supremum is attained.
const ATTAIN_REL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Lambda,
    Dirac,
    Commutator,
    LocalizedBlock,
    Product,
}

/// A dense matrix with its row and column index sets.
#[derive(Clone, Debug)]
pub struct TruncatedOperator {
    pub matrix: DMatrix<Complex64>,
    pub rows: Vec<GroupElement>,
    pub cols: Vec<GroupElement>,
    pub provenance: Provenance,
}

impl TruncatedOperator {
    pub fn entry(&self, x: &GroupElement, y: &GroupElement) -> Option<Complex64> {
        let i = self.rows.iter().position(|r| r == x)?;
        let j = self.cols.iter().position(|c| c == y)?;
        Some(self.matrix[(i, j)])
    }

    /// Header line `rows cols provenance`, then one row per line of `re im` pairs.
    pub fn dump(&self) -> String {
        let mut s = format!("{} {} {:?}\n", self.matrix.nrows(), self.matrix.ncols(), self.provenance);
        for i in 0..self.matrix.nrows() {
            let row: Vec<String> = (0..self.matrix.ncols())
                .map(|j| {
                    let v = self.matrix[(i, j)];
                    format!("{:e} {:e}", v.re, v.im)
                })
                .collect();
            s.push_str(&row.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn norm(&self) -> NormValue {
        operator_norm(&self.matrix, NormMethod::Auto)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormMethod {
    Svd,
    PowerIteration,
    /// Dense factorization up to `POWER_THRESHOLD`, power iteration above.
    Auto,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Certificate {
    Exact,
    LowerBound,
    UpperBound,
    Bracketed { lo: f64, hi: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormValue {
    pub value: f64,
    pub certificate: Certificate,
    /// Power iteration only: residual-based estimate of the distance to the true norm.
    pub gap: Option<f64>,
}

/// Largest singular value of a dense matrix.
pub fn operator_norm(m: &DMatrix<Complex64>, method: NormMethod) -> NormValue {
    if m.nrows() == 0 || m.ncols() == 0 {
        return NormValue { value: 0.0, certificate: Certificate::Exact, gap: None };
    }
    let small = m.nrows().min(m.ncols());
    match method {
        NormMethod::Svd => dense_norm(m),
        NormMethod::PowerIteration => power_norm(m),
        NormMethod::Auto if small > POWER_THRESHOLD => power_norm(m),
        NormMethod::Auto => dense_norm(m),
    }
}

fn dense_norm(m: &DMatrix<Complex64>) -> NormValue {
    let value = if m.nrows().min(m.ncols()) <= 64 {
        m.singular_values().max()
    } else {
        let g = if m.nrows() >= m.ncols() { m.adjoint() * m } else { m * m.adjoint() };
        hermitian_max_eigenvalue(g).max(0.0).sqrt()
    };
    NormValue { value, certificate: Certificate::Exact, gap: None }
}

fn hermitian_max_eigenvalue(g: DMatrix<Complex64>) -> f64 {
    if g.nrows() == 1 {
        return g[(0, 0)].re;
    }
    g.symmetric_eigenvalues().max()
}

fn power_norm(m: &DMatrix<Complex64>) -> NormValue {
    let mut rng = ChaCha8Rng::seed_from_u64(POWER_SEED);
    let n = m.ncols();
    let mut v =
        nalgebra::DVector::from_fn(n, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    v /= Complex64::new(v.norm(), 0.0);
    let mut prev = 0.0;
    let mut lower = 0.0;
    let mut gap = None;
    for _ in 0..POWER_MAX_ITERS {
        let w = m * &v;
        let u = m.adjoint() * &w;
        let un = u.norm();
        if un == 0.0 {
            break;
        }
        // ‖A*Av‖ <= ‖A‖² for unit v
        let est = un.sqrt();
        lower = f64::max(lower, est);
        let sigma2 = w.norm_squared();
        let resid = (&u - &v * Complex64::new(sigma2, 0.0)).norm();
        gap = Some(resid / est.max(f64::MIN_POSITIVE));
        v = u / Complex64::new(un, 0.0);
        if (est - prev).abs() <= POWER_REL_TOL * est {
            break;
        }
        prev = est;
    }
    NormValue { value: lower, certificate: Certificate::LowerBound, gap }
}

/// A matrix given by its nonzero entries.
#[derive(Clone, Debug, Default)]
pub struct SparseBlock {
    pub nrows: usize,
    pub ncols: usize,
    pub entries: Vec<(usize, usize, Complex64)>,
}

impl SparseBlock {
    pub fn frobenius(&self) -> f64 {
        self.entries.iter().map(|e| e.2.norm_sqr()).sum::<f64>().sqrt()
    }

    /// min(Frobenius, Schur test) upper bound on the operator norm.
    pub fn norm_upper(&self) -> f64 {
        let mut rs = vec![0.0; self.nrows];
        let mut cs = vec![0.0; self.ncols];
        for &(i, j, c) in &self.entries {
            rs[i] += c.norm();
            cs[j] += c.norm();
        }
        let schur = (rs.iter().copied().fold(0.0, f64::max) * cs.iter().copied().fold(0.0, f64::max)).sqrt();
        self.frobenius().min(schur)
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for &(i, j, c) in &self.entries {
            m[(i, j)] += c;
        }
        m
    }

    /// Operator norm as the max over connected components of the kernel graph.
    pub fn norm(&self) -> NormValue {
        if self.entries.is_empty() {
            return NormValue { value: 0.0, certificate: Certificate::Exact, gap: None };
        }
        let mut uf = UnionFind::new(self.nrows + self.ncols);
        for &(i, j, _) in &self.entries {
            uf.union(i, self.nrows + j);
        }
        let mut comps: HashMap<usize, Vec<usize>> = HashMap::new();
        for (k, e) in self.entries.iter().enumerate() {
            comps.entry(uf.find(e.0)).or_default().push(k);
        }
        let mut comps: Vec<Vec<usize>> = comps.into_values().collect();
        comps.sort_by_key(|c| c[0]);
        let mut best = NormValue { value: 0.0, certificate: Certificate::Exact, gap: None };
        for comp in comps {
            let nv = self.component_norm(&comp);
            if nv.certificate != Certificate::Exact {
                best.certificate = Certificate::LowerBound;
                best.gap = nv.gap;
            }
            best.value = best.value.max(nv.value);
        }
        best
    }

    fn component_norm(&self, comp: &[usize]) -> NormValue {
        let mut rmap: HashMap<usize, usize> = HashMap::new();
        let mut cmap: HashMap<usize, usize> = HashMap::new();
        for &k in comp {
            let (i, j, _) = self.entries[k];
            let n = rmap.len();
            rmap.entry(i).or_insert(n);
            let n = cmap.len();
            cmap.entry(j).or_insert(n);
        }
        let (nr, nc) = (rmap.len(), cmap.len());
        if nr == 1 || nc == 1 {
            let s: f64 = comp.iter().map(|&k| self.entries[k].2.norm_sqr()).sum();
            return NormValue { value: s.sqrt(), certificate: Certificate::Exact, gap: None };
        }
        // Gram on the smaller side, accumulated from the lines of the larger side
        let by_col = nc <= nr;
        let side = if by_col { nc } else { nr };
        if side > POWER_THRESHOLD {
            let mut m = DMatrix::zeros(nr, nc);
            for &k in comp {
                let (i, j, c) = self.entries[k];
                m[(rmap[&i], cmap[&j])] += c;
            }
            return power_norm(&m);
        }
        let real = comp.iter().all(|&k| self.entries[k].2.im == 0.0);
        if side <= 64 {
            let value = if real {
                let mut m = DMatrix::<f64>::zeros(nr, nc);
                for &k in comp {
                    let (i, j, c) = self.entries[k];
                    m[(rmap[&i], cmap[&j])] += c.re;
                }
                m.singular_values().max()
            } else {
                let mut m = DMatrix::<Complex64>::zeros(nr, nc);
                for &k in comp {
                    let (i, j, c) = self.entries[k];
                    m[(rmap[&i], cmap[&j])] += c;
                }
                m.singular_values().max()
            };
            return NormValue { value, certificate: Certificate::Exact, gap: None };
        }
        let mut lines: Vec<Vec<(usize, Complex64)>> = vec![Vec::new(); if by_col { nr } else { nc }];
        for &k in comp {
            let (i, j, c) = self.entries[k];
            let (li, si) = if by_col { (rmap[&i], cmap[&j]) } else { (cmap[&j], rmap[&i]) };
            lines[li].push((si, c));
        }
        let value = if real {
            let mut g = DMatrix::<f64>::zeros(side, side);
            for line in &lines {
                for &(a, ca) in line {
                    for &(b, cb) in line {
                        g[(a, b)] += ca.re * cb.re;
                    }
                }
            }
            g.symmetric_eigenvalues().max().max(0.0).sqrt()
        } else {
            let mut g = DMatrix::<Complex64>::zeros(side, side);
            for line in &lines {
                for &(a, ca) in line {
                    for &(b, cb) in line {
                        // by_col: (A*A)_{ab} = Σ conj(A_ra) A_rb; otherwise (AA*)_{ab} = Σ A_ac conj(A_bc)
                        g[(a, b)] += if by_col { ca.conj() * cb } else { ca * cb.conj() };
                    }
                }
            }
            hermitian_max_eigenvalue(g).max(0.0).sqrt()
        };
        NormValue { value, certificate: Certificate::Exact, gap: None }
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Length lookups through a materialized ball, falling back to the length function.
pub struct Lengths<'a> {
    lf: &'a LengthFunction,
    table: Option<Arc<BallTable>>,
}

impl<'a> Lengths<'a> {
    /// Materializes B(radius) for word lengths; closed-form lengths need no table.
    pub fn new(lf: &'a LengthFunction, radius: f64) -> Result<Self> {
        let probe = lf.group().identity();
        let table = if lf.closed_form(&probe).is_some() { None } else { Some(lf.ball(radius)?) };
        Ok(Lengths { lf, table })
    }

    pub fn get(&self, g: &GroupElement) -> Result<f64> {
        if let Some(l) = self.lf.closed_form(g) {
            return Ok(l);
        }
        match self.table.as_ref().and_then(|t| t.length_of(g)) {
            Some(l) => Ok(l),
            None => self.lf.length(g),
        }
    }
}

/// supp(f)·domain, sorted by (length, element).
pub fn image_set(lf: &LengthFunction, f: &AlgebraElement, domain: &[GroupElement]) -> Result<Vec<GroupElement>> {
    let group = lf.group();
    let mut img: Vec<(f64, GroupElement)> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for y in domain {
        for s in f.support() {
            let x = group.mul(s, y);
            if seen.insert(x.clone()) {
                img.push((lf.length(&x)?, x));
            }
        }
    }
    img.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then_with(|| a.1.cmp(&b.1)));
    Ok(img.into_iter().map(|p| p.1).collect())
}

fn check_rows(rows: usize, cap: usize) -> Result<()> {
    if rows > cap {
        return Err(QmError::MatrixCap { rows, cap });
    }
    Ok(())
}

/// Matrix of λ_f from `domain` to `codomain`: entry(x, y) = f(xy⁻¹).
pub fn lambda_matrix(
    lf: &LengthFunction,
    f: &AlgebraElement,
    domain: &[GroupElement],
    codomain: &[GroupElement],
) -> TruncatedOperator {
    let group = lf.group();
    let index: HashMap<&GroupElement, usize> = codomain.iter().enumerate().map(|(i, g)| (g, i)).collect();
    let mut m = DMatrix::zeros(codomain.len(), domain.len());
    for (j, y) in domain.iter().enumerate() {
        for (s, c) in f.iter() {
            if let Some(&i) = index.get(&group.mul(s, y)) {
                m[(i, j)] += *c;
            }
        }
    }
    TruncatedOperator { matrix: m, rows: codomain.to_vec(), cols: domain.to_vec(), provenance: Provenance::Lambda }
}

/// Diagonal matrix of D = M_𝕃 on an index set.
pub fn dirac_matrix(lf: &LengthFunction, index: &[GroupElement]) -> Result<TruncatedOperator> {
    let mut m = DMatrix::zeros(index.len(), index.len());
    for (i, g) in index.iter().enumerate() {
        m[(i, i)] = Complex64::new(lf.length(g)?, 0.0);
    }
    Ok(TruncatedOperator { matrix: m, rows: index.to_vec(), cols: index.to_vec(), provenance: Provenance::Dirac })
}

/// [D, λ_f] restricted to `domain`, with codomain supp(f)·domain:
/// entry(x, y) = (𝕃(x) − 𝕃(y)) f(xy⁻¹).
pub fn commutator_matrix(
    lf: &LengthFunction,
    f: &AlgebraElement,
    domain: &[GroupElement],
) -> Result<TruncatedOperator> {
    let codomain = image_set(lf, f, domain)?;
    check_rows(codomain.len(), DEFAULT_ROW_CAP.max(lf.ball_cap()))?;
    commutator_between(lf, f, domain, &codomain)
}

fn commutator_between(
    lf: &LengthFunction,
    f: &AlgebraElement,
    domain: &[GroupElement],
    codomain: &[GroupElement],
) -> Result<TruncatedOperator> {
    let group = lf.group();
    let index: HashMap<&GroupElement, usize> = codomain.iter().enumerate().map(|(i, g)| (g, i)).collect();
    let mut m = DMatrix::zeros(codomain.len(), domain.len());
    for (j, y) in domain.iter().enumerate() {
        let ly = lf.length(y)?;
        for (s, c) in f.iter() {
            let x = group.mul(s, y);
            if let Some(&i) = index.get(&x) {
                m[(i, j)] += *c * (lf.length(&x)? - ly);
            }
        }
    }
    Ok(TruncatedOperator {
        matrix: m,
        rows: codomain.to_vec(),
        cols: domain.to_vec(),
        provenance: Provenance::Commutator,
    })
}

/// Sparse kernel of P [D, λ_f] P on an index set.
fn compressed_commutator(lf: &LengthFunction, f: &AlgebraElement, ball: &BallTable, r: f64) -> Result<SparseBlock> {
    let group = lf.group();
    let n = ball.prefix_len(r);
    let mut block = SparseBlock { nrows: n, ncols: n, entries: Vec::new() };
    for j in 0..n {
        let y = &ball.elements()[j];
        let ly = ball.lengths()[j];
        for (s, c) in f.iter() {
            let x = group.mul(s, y);
            if let Some(i) = ball.index_of(&x).filter(|&i| i < n) {
                let d = ball.lengths()[i] - ly;
                if d != 0.0 {
                    block.entries.push((i, j, *c * d));
                }
            }
        }
    }
    Ok(block)
}

/// (I − M_s) λ_f M_r: rows (supp(f)·B(r)) \ B(s), columns B(r), and its norm.
pub fn localized_block(
    lf: &LengthFunction,
    f: &AlgebraElement,
    r: f64,
    s: f64,
) -> Result<(TruncatedOperator, NormValue)> {
    if !(s > r && r >= 0.0) {
        return Err(QmError::Usage(format!("localized block needs s > r >= 0, got r={r}, s={s}")));
    }
    let group = lf.group();
    let cols = lf.ball(r)?.elements().to_vec();
    let rows: Vec<GroupElement> = image_set(lf, f, &cols)?
        .into_iter()
        .map(|x| Ok((lf.length(&x)?, x)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|(l, _)| *l > s)
        .map(|p| p.1)
        .collect();
    check_rows(rows.len(), DEFAULT_ROW_CAP.max(lf.ball_cap()))?;
    let index: HashMap<&GroupElement, usize> = rows.iter().enumerate().map(|(i, g)| (g, i)).collect();
    let mut sparse = SparseBlock { nrows: rows.len(), ncols: cols.len(), entries: Vec::new() };
    for (j, y) in cols.iter().enumerate() {
        for (a, c) in f.iter() {
            if let Some(&i) = index.get(&group.mul(a, y)) {
                sparse.entries.push((i, j, *c));
            }
        }
    }
    let norm = sparse.norm();
    let op = TruncatedOperator { matrix: sparse.to_dense(), rows, cols, provenance: Provenance::LocalizedBlock };
    Ok((op, norm))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeminormKind {
    #[serde(rename = "L_D")]
    LipD,
    #[serde(rename = "J_D")]
    JD,
    OperatorNorm,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub r: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeminormEstimate {
    pub kind: SeminormKind,
    pub value: f64,
    pub certificate: Certificate,
    pub trace: Vec<TracePoint>,
    pub tolerance: f64,
    /// J_D: the breakpoint at which the supremum is reached or approached.
    pub breakpoint: Option<f64>,
    /// J_D: whether some radius attains the supremum.
    pub attained: Option<bool>,
}

impl SeminormEstimate {
    fn exact(kind: SeminormKind, value: f64) -> Self {
        SeminormEstimate {
            kind,
            value,
            certificate: Certificate::Exact,
            trace: Vec::new(),
            tolerance: 0.0,
            breakpoint: None,
            attained: Some(true),
        }
    }

    /// Lower end of the certified range.
    pub fn lower(&self) -> f64 {
        match self.certificate {
            Certificate::Bracketed { lo, .. } => lo,
            Certificate::UpperBound => 0.0,
            _ => self.value,
        }
    }

    /// Upper end of the certified range.
    pub fn upper(&self) -> f64 {
        match self.certificate {
            Certificate::Bracketed { hi, .. } => hi,
            Certificate::LowerBound => f64::INFINITY,
            _ => self.value,
        }
    }

    /// The last two trace lower bounds differ by a relative amount below `rel`.
    pub fn stabilized(&self, rel: f64) -> bool {
        match self.trace.as_slice() {
            [.., a, b] => (b.lower - a.lower).abs() <= rel * b.lower.abs().max(f64::MIN_POSITIVE),
            _ => false,
        }
    }
}

/// L_D(f) bracket: truncation lower bounds ‖P_r [D, λ_f] P_r‖ and the upper bound Σ|f(s)|𝕃(s).
pub fn lipnorm_estimate(lf: &LengthFunction, f: &AlgebraElement, radii: &[f64]) -> Result<SeminormEstimate> {
    if radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(QmError::Usage("lipnorm radii must be strictly increasing".into()));
    }
    let upper = f.weighted_l1(lf)?;
    if f.support().all(|g| *g == lf.group().identity()) {
        let mut e = SeminormEstimate::exact(SeminormKind::LipD, 0.0);
        e.attained = None;
        return Ok(e);
    }
    let mut trace = Vec::with_capacity(radii.len());
    let mut lower: f64 = 0.0;
    let mut certified = true;
    if let Some(&rmax) = radii.last() {
        let ball = lf.ball(rmax)?;
        for &r in radii {
            let block = compressed_commutator(lf, f, &ball, r)?;
            let nv = block.norm();
            certified &= nv.certificate == Certificate::Exact || nv.certificate == Certificate::LowerBound;
            // compressions increase with r, so the running max is still a lower bound
            lower = lower.max(nv.value);
            trace.push(TracePoint { r, lower, upper });
        }
    }
    debug_assert!(certified);
    let lower = lower.min(upper);
    Ok(SeminormEstimate {
        kind: SeminormKind::LipD,
        value: lower,
        certificate: Certificate::Bracketed { lo: lower, hi: upper },
        trace,
        tolerance: 1e-9,
        breakpoint: None,
        attained: None,
    })
}

/// L_D(δ_s) = sup_x |𝕃(x) − 𝕃(s⁻¹x)|, by running max over balls with cap 𝕃(s).
pub fn lipnorm_single_atom(lf: &LengthFunction, s: &GroupElement, radii: &[f64]) -> Result<SeminormEstimate> {
    let group = lf.group();
    if *s == group.identity() {
        let mut e = SeminormEstimate::exact(SeminormKind::LipD, 0.0);
        e.attained = None;
        return Ok(e);
    }
    let cap = lf.length(s)?;
    let sinv = group.inverse(s);
    let mut best: f64 = 0.0;
    let mut trace = Vec::new();
    for &r in radii {
        let ball = lf.ball(r)?;
        for (x, lx) in ball.elements().iter().zip(ball.lengths()) {
            best = best.max((lx - lf.length(&group.mul(&sinv, x))?).abs());
        }
        trace.push(TracePoint { r, lower: best, upper: cap });
        if best >= cap {
            break;
        }
    }
    let exact = best >= cap;
    Ok(SeminormEstimate {
        kind: SeminormKind::LipD,
        value: best,
        certificate: if exact { Certificate::Exact } else { Certificate::Bracketed { lo: best, hi: cap } },
        trace,
        tolerance: 0.0,
        breakpoint: None,
        attained: None,
    })
}

/// The constancy intervals of r ↦ (I − M_{2r}) λ_f M_r with their sparse blocks.
pub struct JdBlocks {
    /// w_0 = 0 < w_1 < ... < w_m = 𝕃_max(f).
    pub breakpoints: Vec<f64>,
    cols: Vec<f64>,
    /// (column, row, row length, coefficient), only entries with 𝕃(x) > 2𝕃(y).
    entries: Vec<(usize, usize, f64, Complex64)>,
    nrows: usize,
}

impl JdBlocks {
    pub fn new(lf: &LengthFunction, f: &AlgebraElement) -> Result<Self> {
        let lmax = f.support_length(lf)?;
        if lmax == 0.0 {
            return Ok(JdBlocks { breakpoints: vec![0.0], cols: Vec::new(), entries: Vec::new(), nrows: 0 });
        }
        let group = lf.group();
        let ball = lf.ball(lmax)?;
        let lens = Lengths::new(lf, 2.0 * lmax)?;
        let ncols = ball.lengths().partition_point(|&l| l < lmax);
        let mut rows: HashMap<GroupElement, usize> = HashMap::new();
        let mut entries = Vec::new();
        let mut pts = Vec::new();
        for j in 0..ncols {
            let y = &ball.elements()[j];
            let ly = ball.lengths()[j];
            pts.push(ly);
            for (s, c) in f.iter() {
                let x = group.mul(s, y);
                let lx = lens.get(&x)?;
                if lx > 2.0 * ly {
                    let n = rows.len();
                    let i = *rows.entry(x).or_insert(n);
                    entries.push((j, i, lx, *c));
                    pts.push(lx / 2.0);
                }
            }
        }
        let mut breakpoints = vec![0.0];
        breakpoints.extend(dedup_sorted(pts, lmax));
        if *breakpoints.last().unwrap() < lmax {
            breakpoints.push(lmax);
        }
        Ok(JdBlocks { breakpoints, cols: ball.lengths()[..ncols].to_vec(), entries, nrows: rows.len() })
    }

    /// The block at radius w: columns 𝕃(y) <= w, rows 𝕃(x) > 2w.
    pub fn block_at(&self, w: f64) -> SparseBlock {
        let mut rmap: HashMap<usize, usize> = HashMap::new();
        let mut cmap: HashMap<usize, usize> = HashMap::new();
        let mut out = Vec::new();
        for &(j, i, lx, c) in &self.entries {
            if self.cols[j] <= w && lx > 2.0 * w {
                let n = rmap.len();
                let ri = *rmap.entry(i).or_insert(n);
                let n = cmap.len();
                let cj = *cmap.entry(j).or_insert(n);
                out.push((ri, cj, c));
            }
        }
        SparseBlock { nrows: rmap.len(), ncols: cmap.len(), entries: out }
    }

    pub fn total_rows(&self) -> usize {
        self.nrows
    }
}

/// J_D(f) exactly: max over constancy intervals [w_i, w_{i+1}) of w_{i+1}·‖block(w_i)‖.
pub fn jd_seminorm(lf: &LengthFunction, f: &AlgebraElement) -> Result<SeminormEstimate> {
    let blocks = JdBlocks::new(lf, f)?;
    let w = &blocks.breakpoints;
    if w.len() < 2 {
        return Ok(SeminormEstimate::exact(SeminormKind::JD, 0.0));
    }
    let m = w.len() - 1;
    let cap = DEFAULT_ROW_CAP.max(lf.ball_cap());
    let mut sparse: Vec<SparseBlock> = Vec::with_capacity(m);
    let mut ub = Vec::with_capacity(m);
    for &wi in &w[..m] {
        let b = blocks.block_at(wi);
        check_rows(b.nrows, cap)?;
        ub.push(b.norm_upper());
        sparse.push(b);
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| (w[b + 1] * ub[b]).partial_cmp(&(w[a + 1] * ub[a])).unwrap());
    let mut norms: Vec<Option<NormValue>> = vec![None; m];
    let mut best = 0.0;
    let mut best_i = 0;
    let mut exact = true;
    for &i in &order {
        if w[i + 1] * ub[i] <= best {
            break;
        }
        let nv = sparse[i].norm();
        exact &= nv.certificate == Certificate::Exact;
        norms[i] = Some(nv);
        if w[i + 1] * nv.value > best {
            best = w[i + 1] * nv.value;
            best_i = i;
        }
    }
    // attained iff some left endpoint w_j reaches the supremum
    let mut attained = best == 0.0;
    for j in 1..m {
        if attained || w[j] * ub[j] < best * (1.0 - ATTAIN_REL) {
            continue;
        }
        let nv = *norms[j].get_or_insert_with(|| sparse[j].norm());
        if w[j] * nv.value >= best * (1.0 - ATTAIN_REL) {
            attained = true;
        }
    }
    let trace = (0..m)
        .filter_map(|i| {
            norms[i].map(|nv| TracePoint { r: w[i + 1], lower: w[i + 1] * nv.value, upper: w[i + 1] * nv.value })
        })
        .collect();
    Ok(SeminormEstimate {
        kind: SeminormKind::JD,
        value: best,
        certificate: if exact { Certificate::Exact } else { Certificate::LowerBound },
        trace,
        tolerance: 0.0,
        breakpoint: Some(w[best_i + 1]),
        attained: Some(attained),
    })
}
