//! Length functions, balls B(r) = {x : 𝕃(x) ≤ r}, annuli and breakpoints.
//!
//! Word lengths are computed by breadth-first search over the Cayley graph.
//! Completed BFS layers are cached and ball requests only ever extend the
//! cache. Max-weight lengths on direct sums and the logarithmic length on ℤ
//! have closed forms and never search.
//!
//! Lengths are `f64`. Ball membership uses the sharp comparison `𝕃(x) <= r`
//! with no epsilon.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::error::{QmError, Result};
use crate::group::{DirectSum, GroupDescriptor, GroupElement};

/// Default cap on the number of elements in a single materialized ball.
pub const DEFAULT_BALL_CAP: usize = 2_000_000;

/// Relative tolerance used to merge breakpoints that differ only by
/// representation noise.
pub const BREAKPOINT_DEDUP_REL: f64 = 1.0 / (1u64 << 40) as f64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum LengthKind {
    /// `scale` times the word length for the family's standard generators.
    Word { scale: f64 },
    /// 𝕃(x) = max{a_n : x_n ≠ e_n} on a direct sum.
    MaxWeight,
    /// 𝕃(x) = ln(2|x|) on ℤ.
    LogAbs,
}

/// A ball, sorted by (length, encoding). The identity is always index 0.
#[derive(Debug, Clone)]
pub struct BallTable {
    radius: f64,
    elements: Vec<GroupElement>,
    lengths: Vec<f64>,
    index: HashMap<GroupElement, usize>,
}

impl BallTable {
    fn new(radius: f64, elements: Vec<GroupElement>, lengths: Vec<f64>) -> Self {
        let index = elements.iter().enumerate().map(|(i, g)| (g.clone(), i)).collect();
        BallTable { radius, elements, lengths, index }
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[GroupElement] {
        &self.elements
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn index_of(&self, g: &GroupElement) -> Option<usize> {
        self.index.get(g).copied()
    }

    pub fn contains(&self, g: &GroupElement) -> bool {
        self.index.contains_key(g)
    }

    pub fn length_of(&self, g: &GroupElement) -> Option<f64> {
        self.index_of(g).map(|i| self.lengths[i])
    }

    /// Number of elements of length <= r; `elements()[..prefix_len(r)]` is B(r).
    pub fn prefix_len(&self, r: f64) -> usize {
        self.lengths.partition_point(|&l| l <= r)
    }

    /// The sub-ball B(r) for r <= radius, as an element slice.
    pub fn sub_ball(&self, r: f64) -> &[GroupElement] {
        &self.elements[..self.prefix_len(r)]
    }
}

#[derive(Default)]
struct WordCache {
    layers: Vec<Vec<GroupElement>>,
    dist: HashMap<GroupElement, u32>,
    total: usize,
    /// BFS has exhausted a finite group.
    exhausted: bool,
}

#[derive(Default)]
struct Cache {
    word: WordCache,
    tables: BTreeMap<u64, Arc<BallTable>>,
}

/// A proper length function on a concrete group, with its ball cache.
pub struct LengthFunction {
    group: Arc<GroupDescriptor>,
    kind: LengthKind,
    generators: Vec<GroupElement>,
    ball_cap: usize,
    cache: Mutex<Cache>,
}

impl std::fmt::Debug for LengthFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LengthFunction")
            .field("group", &self.group.family_name())
            .field("kind", &self.kind)
            .field("ball_cap", &self.ball_cap)
            .finish()
    }
}

impl LengthFunction {
    pub fn new(group: Arc<GroupDescriptor>, kind: LengthKind) -> Result<Self> {
        let generators = match (&kind, group.as_ref()) {
            (LengthKind::Word { scale }, g) => {
                if !(scale.is_finite() && *scale > 0.0) {
                    return Err(QmError::Usage(format!("word-length scale {scale} must be positive")));
                }
                g.generators()?
            }
            (LengthKind::MaxWeight, GroupDescriptor::DirectSum(_)) => Vec::new(),
            (LengthKind::MaxWeight, g) => {
                return Err(QmError::Usage(format!(
                    "max-weight length needs a direct sum, not a {} group",
                    g.family_name()
                )))
            }
            (LengthKind::LogAbs, GroupDescriptor::FreeAbelian { rank: 1 }) => Vec::new(),
            (LengthKind::LogAbs, g) => {
                return Err(QmError::Usage(format!(
                    "logarithmic length is defined on ℤ only, not on a {} group",
                    g.family_name()
                )))
            }
        };
        let mut cache = Cache::default();
        if let LengthKind::Word { .. } = kind {
            let e = group.identity();
            cache.word.dist.insert(e.clone(), 0);
            cache.word.layers.push(vec![e]);
            cache.word.total = 1;
        }
        Ok(LengthFunction { group, kind, generators, ball_cap: DEFAULT_BALL_CAP, cache: Mutex::new(cache) })
    }

    /// Word length with the standard generators.
    pub fn word(group: Arc<GroupDescriptor>) -> Result<Self> {
        Self::new(group, LengthKind::Word { scale: 1.0 })
    }

    pub fn with_ball_cap(mut self, cap: usize) -> Self {
        self.ball_cap = cap;
        self
    }

    /// Largest number of ball elements materialized so far.
    pub fn peak_ball_size(&self) -> usize {
        let cache = self.cache.lock().unwrap();
        let tables = cache.tables.values().map(|t| t.len()).max().unwrap_or(0);
        cache.word.total.max(tables)
    }

    pub fn ball_cap(&self) -> usize {
        self.ball_cap
    }

    pub fn group(&self) -> &Arc<GroupDescriptor> {
        &self.group
    }

    pub fn kind(&self) -> &LengthKind {
        &self.kind
    }

    fn direct_sum(&self) -> &DirectSum {
        match self.group.as_ref() {
            GroupDescriptor::DirectSum(ds) => ds,
            _ => unreachable!("max-weight length on a non-direct-sum group"),
        }
    }

    fn word_scale(&self) -> Option<f64> {
        match self.kind {
            LengthKind::Word { scale } => Some(scale),
            _ => None,
        }
    }

    /// Closed-form length, without touching the cache. `None` for word lengths.
    pub fn closed_form(&self, g: &GroupElement) -> Option<f64> {
        match self.kind {
            LengthKind::Word { .. } => None,
            LengthKind::MaxWeight => match g {
                GroupElement::Sparse(e) => Some(match e.last() {
                    None => 0.0,
                    Some((i, _)) => self.direct_sum().weight(*i),
                }),
                _ => None,
            },
            LengthKind::LogAbs => g.as_int().map(|x| if x == 0 { 0.0 } else { (2.0 * (x as f64).abs()).ln() }),
        }
    }

    /// 𝕃(g).
    pub fn length(&self, g: &GroupElement) -> Result<f64> {
        if !self.group.contains(g) {
            return Err(QmError::Usage(format!("{g} is not an element of the {} group", self.group.family_name())));
        }
        if let Some(l) = self.closed_form(g) {
            return Ok(l);
        }
        let scale = self.word_scale().expect("word length");
        let mut cache = self.cache.lock().unwrap();
        loop {
            if let Some(&d) = cache.word.dist.get(g) {
                return Ok(d as f64 * scale);
            }
            if cache.word.exhausted {
                unreachable!("element {g} missing from an exhausted finite group");
            }
            let next = cache.word.layers.len();
            self.extend_layer(&mut cache.word, next as f64 * scale)?;
        }
    }

    fn extend_layer(&self, w: &mut WordCache, radius: f64) -> Result<()> {
        let last = w.layers.last().expect("identity layer");
        let mut next = Vec::new();
        for g in last {
            for s in &self.generators {
                let h = self.group.mul(g, s);
                if !w.dist.contains_key(&h) {
                    w.dist.insert(h.clone(), w.layers.len() as u32);
                    next.push(h);
                }
            }
        }
        if next.is_empty() {
            w.exhausted = true;
            return Ok(());
        }
        if w.total + next.len() > self.ball_cap {
            // undo the partial layer so the cache stays consistent
            for h in &next {
                w.dist.remove(h);
            }
            return Err(QmError::BallCap { radius, projected: (w.total + next.len()) as u128, cap: self.ball_cap });
        }
        next.sort();
        w.total += next.len();
        w.layers.push(next);
        Ok(())
    }

    /// Number of word-length layers j with j·scale <= r.
    fn layers_within(scale: f64, r: f64) -> usize {
        let mut j = (r / scale).floor().max(0.0) as usize;
        while j > 0 && j as f64 * scale > r {
            j -= 1;
        }
        while (j + 1) as f64 * scale <= r {
            j += 1;
        }
        j
    }

    /// Largest m >= 0 with ln(2m) <= r (m = 0 when r < ln 2).
    fn log_abs_extent(r: f64) -> u64 {
        if r < 2f64.ln() {
            return 0;
        }
        let guess = (r.exp() / 2.0).floor();
        if !guess.is_finite() || guess > 9.0e15 {
            return u64::MAX;
        }
        let mut m = guess.max(1.0) as u64;
        while m > 0 && (2.0 * m as f64).ln() > r {
            m -= 1;
        }
        while (2.0 * (m + 1) as f64).ln() <= r {
            m += 1;
        }
        m
    }

    /// |B(r)| without necessarily enumerating the ball.
    pub fn ball_size(&self, r: f64) -> Result<u128> {
        if r < 0.0 {
            return Ok(0);
        }
        match self.kind {
            LengthKind::Word { scale } => self.word_ball_size(scale, r),
            LengthKind::MaxWeight => {
                let ds = self.direct_sum();
                let m = ds.count_at_most(r);
                let mut size: u128 = 1;
                for n in 1..=m as u32 {
                    size = size.checked_mul(ds.components.component(n).order()).ok_or(QmError::BallCap {
                        radius: r,
                        projected: u128::MAX,
                        cap: self.ball_cap,
                    })?;
                }
                Ok(size)
            }
            LengthKind::LogAbs => {
                let m = Self::log_abs_extent(r);
                if m == u64::MAX {
                    return Err(QmError::BallCap { radius: r, projected: u128::MAX, cap: self.ball_cap });
                }
                Ok(2 * m as u128 + 1)
            }
        }
    }

    /// ln|B(r)|, without overflow for direct sums with very large balls.
    pub fn log_ball_size(&self, r: f64) -> Result<f64> {
        match self.kind {
            LengthKind::MaxWeight => {
                let ds = self.direct_sum();
                Ok((1..=ds.count_at_most(r) as u32).map(|n| (ds.components.component(n).order() as f64).ln()).sum())
            }
            _ => Ok((self.ball_size(r)? as f64).ln()),
        }
    }

    /// The ball B(r), enumerated exactly and cached.
    pub fn ball(&self, r: f64) -> Result<Arc<BallTable>> {
        if !(r >= 0.0) {
            return Err(QmError::Usage(format!("ball radius {r} must be nonnegative")));
        }
        match self.kind {
            LengthKind::Word { scale } => self.word_ball(scale, r),
            LengthKind::MaxWeight => self.max_weight_ball(r),
            LengthKind::LogAbs => self.log_abs_ball(r),
        }
    }

    fn word_ball_size(&self, scale: f64, r: f64) -> Result<u128> {
        let want = Self::layers_within(scale, r);
        let mut cache = self.cache.lock().unwrap();
        while cache.word.layers.len() <= want && !cache.word.exhausted {
            let next = cache.word.layers.len();
            self.extend_layer(&mut cache.word, next as f64 * scale)?;
        }
        let k = want.min(cache.word.layers.len() - 1);
        Ok(cache.word.layers[..=k].iter().map(|l| l.len() as u128).sum())
    }

    fn word_ball(&self, scale: f64, r: f64) -> Result<Arc<BallTable>> {
        let want = Self::layers_within(scale, r);
        let mut cache = self.cache.lock().unwrap();
        while cache.word.layers.len() <= want && !cache.word.exhausted {
            let next = cache.word.layers.len();
            self.extend_layer(&mut cache.word, next as f64 * scale)?;
        }
        let k = want.min(cache.word.layers.len() - 1);
        if let Some(t) = cache.tables.get(&(k as u64)) {
            return Ok(t.clone());
        }
        let mut elements = Vec::new();
        let mut lengths = Vec::new();
        for (j, layer) in cache.word.layers[..=k].iter().enumerate() {
            elements.extend(layer.iter().cloned());
            lengths.extend(std::iter::repeat_n(j as f64 * scale, layer.len()));
        }
        // the table radius is the largest radius with this exact content
        let table = Arc::new(BallTable::new(k as f64 * scale, elements, lengths));
        cache.tables.insert(k as u64, table.clone());
        Ok(table)
    }

    fn max_weight_ball(&self, r: f64) -> Result<Arc<BallTable>> {
        let ds = self.direct_sum();
        let m = ds.count_at_most(r);
        let size = self.ball_size(r)?;
        if size > self.ball_cap as u128 {
            return Err(QmError::BallCap { radius: r, projected: size, cap: self.ball_cap });
        }
        let mut cache = self.cache.lock().unwrap();
        if let Some(t) = cache.tables.get(&(m as u64)) {
            return Ok(t.clone());
        }
        let mut elements = vec![self.group.identity()];
        let mut lengths = vec![0.0];
        // prefix: all elements supported in 1..n-1
        let mut prefix: Vec<Vec<(u32, crate::group::Component)>> = vec![Vec::new()];
        for n in 1..=m as u32 {
            let gn = ds.components.component(n);
            let id = gn.identity();
            let mut layer: Vec<GroupElement> = Vec::new();
            for c in gn.elements().into_iter().filter(|c| *c != id) {
                for p in &prefix {
                    let mut e = p.clone();
                    e.push((n, c.clone()));
                    layer.push(GroupElement::Sparse(e));
                }
            }
            layer.sort();
            let a = ds.weight(n);
            lengths.extend(std::iter::repeat_n(a, layer.len()));
            prefix.extend(layer.iter().map(|g| match g {
                GroupElement::Sparse(e) => e.clone(),
                _ => unreachable!(),
            }));
            elements.extend(layer);
        }
        let radius = if m == 0 { 0.0 } else { ds.weight(m as u32) };
        let table = Arc::new(BallTable::new(radius, elements, lengths));
        cache.tables.insert(m as u64, table.clone());
        Ok(table)
    }

    fn log_abs_ball(&self, r: f64) -> Result<Arc<BallTable>> {
        let m = Self::log_abs_extent(r);
        let size = 2u128 * m as u128 + 1;
        if m == u64::MAX || size > self.ball_cap as u128 {
            return Err(QmError::BallCap { radius: r, projected: size, cap: self.ball_cap });
        }
        let mut cache = self.cache.lock().unwrap();
        if let Some(t) = cache.tables.get(&m) {
            return Ok(t.clone());
        }
        let mut elements = vec![GroupElement::Vector(vec![0])];
        let mut lengths = vec![0.0];
        for x in 1..=m as i64 {
            let l = (2.0 * x as f64).ln();
            elements.push(GroupElement::Vector(vec![-x]));
            elements.push(GroupElement::Vector(vec![x]));
            lengths.push(l);
            lengths.push(l);
        }
        let radius = if m == 0 { 0.0 } else { (2.0 * m as f64).ln() };
        let table = Arc::new(BallTable::new(radius, elements, lengths));
        cache.tables.insert(m, table.clone());
        Ok(table)
    }

    /// A(s, t) = B(t) \ B(s) = {x : s < 𝕃(x) <= t}, sorted.
    pub fn annulus(&self, s: f64, t: f64) -> Result<Vec<GroupElement>> {
        if !(s >= 0.0 && s < t) {
            return Err(QmError::Usage(format!("annulus A({s}, {t}) needs 0 <= s < t")));
        }
        let ball = self.ball(t)?;
        let from = ball.prefix_len(s);
        Ok(ball.elements()[from..].to_vec())
    }

    /// Distinct positive length values in [lo, hi], sorted.
    pub fn length_values(&self, lo: f64, hi: f64) -> Result<Vec<f64>> {
        let mut out: Vec<f64> = match self.kind {
            LengthKind::Word { .. } | LengthKind::LogAbs => {
                let ball = self.ball(hi)?;
                let mut v: Vec<f64> = ball.lengths().to_vec();
                v.dedup();
                v
            }
            LengthKind::MaxWeight => {
                let ds = self.direct_sum();
                ds.weights_table()[..ds.count_at_most(hi)].to_vec()
            }
        };
        out.retain(|&l| l > 0.0 && l >= lo && l <= hi);
        Ok(out)
    }

    /// All radii in (0, limit] where r ↦ B(r) or r ↦ B(2r) changes:
    /// {𝕃(x) : x ∈ B(limit)} ∪ {𝕃(x)/2 : x ∈ B(2·limit)}, intersected with (0, limit].
    pub fn breakpoints(&self, limit: f64) -> Result<Vec<f64>> {
        if !(limit >= 0.0) {
            return Err(QmError::Usage(format!("breakpoint limit {limit} must be nonnegative")));
        }
        let mut pts = self.length_values(0.0, limit)?;
        pts.extend(self.length_values(0.0, 2.0 * limit)?.into_iter().map(|l| l / 2.0));
        Ok(dedup_sorted(pts, limit))
    }
}

/// Sort, restrict to (0, limit], and merge values within the breakpoint tolerance.
pub fn dedup_sorted(mut pts: Vec<f64>, limit: f64) -> Vec<f64> {
    pts.retain(|&p| p > 0.0 && p <= limit);
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut out: Vec<f64> = Vec::with_capacity(pts.len());
    for p in pts {
        match out.last() {
            Some(&q) if (p - q).abs() <= BREAKPOINT_DEDUP_REL * p.abs().max(q.abs()) => {}
            _ => out.push(p),
        }
    }
    out
}
