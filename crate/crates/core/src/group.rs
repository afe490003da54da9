//! Concrete discrete groups with exact normal forms.
//!
//! Every family stores elements in a canonical encoding, so structural
//! equality of [`GroupElement`] values is equality in the group. The derived
//! `Ord` agrees with the byte order of [`GroupElement::encode`], which is the
//! tie-break used when balls are sorted.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{QmError, Result};

/// An element of a finite component group (inside a direct sum).
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Component {
    Residue(u32),
    /// Image array of a permutation of `0..n`.
    Perm(Vec<u8>),
}

/// A finite group usable as a factor in products and direct sums.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FiniteGroup {
    /// ℤ/mℤ.
    Cyclic(u32),
    /// The alternating group on `n` points.
    Alternating(u8),
}

impl FiniteGroup {
    pub fn validate(&self) -> Result<()> {
        match *self {
            FiniteGroup::Cyclic(m) if m < 2 => {
                Err(QmError::InvalidParameters(format!("cyclic component of order {m}; orders must be at least 2")))
            }
            FiniteGroup::Alternating(n) if !(3..=9).contains(&n) => {
                Err(QmError::InvalidParameters(format!("alternating group degree {n} outside 3..=9")))
            }
            _ => Ok(()),
        }
    }

    pub fn order(&self) -> u128 {
        match *self {
            FiniteGroup::Cyclic(m) => m as u128,
            FiniteGroup::Alternating(n) => (1..=n as u128).product::<u128>() / 2,
        }
    }

    pub fn identity(&self) -> Component {
        match *self {
            FiniteGroup::Cyclic(_) => Component::Residue(0),
            FiniteGroup::Alternating(n) => Component::Perm((0..n).collect()),
        }
    }

    pub fn compose(&self, a: &Component, b: &Component) -> Component {
        match (self, a, b) {
            (FiniteGroup::Cyclic(m), Component::Residue(x), Component::Residue(y)) => {
                Component::Residue(((*x as u64 + *y as u64) % *m as u64) as u32)
            }
            (FiniteGroup::Alternating(_), Component::Perm(p), Component::Perm(q)) => {
                // (pq)(i) = p(q(i))
                Component::Perm(q.iter().map(|&i| p[i as usize]).collect())
            }
            _ => panic!("component {a:?} or {b:?} does not belong to {self:?}"),
        }
    }

    pub fn inverse(&self, a: &Component) -> Component {
        match (self, a) {
            (FiniteGroup::Cyclic(m), Component::Residue(x)) => Component::Residue(if *x == 0 { 0 } else { m - x }),
            (FiniteGroup::Alternating(_), Component::Perm(p)) => {
                let mut inv = vec![0u8; p.len()];
                for (i, &pi) in p.iter().enumerate() {
                    inv[pi as usize] = i as u8;
                }
                Component::Perm(inv)
            }
            _ => panic!("component {a:?} does not belong to {self:?}"),
        }
    }

    pub fn contains(&self, a: &Component) -> bool {
        match (self, a) {
            (FiniteGroup::Cyclic(m), Component::Residue(x)) => x < m,
            (FiniteGroup::Alternating(n), Component::Perm(p)) => p.len() == *n as usize && is_even_permutation(p),
            _ => false,
        }
    }

    /// All elements, sorted.
    pub fn elements(&self) -> Vec<Component> {
        match *self {
            FiniteGroup::Cyclic(m) => (0..m).map(Component::Residue).collect(),
            FiniteGroup::Alternating(n) => {
                let mut out = Vec::new();
                let mut perm: Vec<u8> = (0..n).collect();
                permutations(&mut perm, 0, &mut out);
                out.retain(|p| is_even_permutation(p));
                out.sort();
                out.into_iter().map(Component::Perm).collect()
            }
        }
    }

    /// Symmetric generating set.
    pub fn generators(&self) -> Vec<Component> {
        let mut gens = match *self {
            FiniteGroup::Cyclic(m) => vec![Component::Residue(1), Component::Residue(m - 1)],
            FiniteGroup::Alternating(n) => {
                // 3-cycles (0 1 k) generate A_n.
                let mut gens = Vec::new();
                for k in 2..n {
                    let mut p: Vec<u8> = (0..n).collect();
                    p[0] = 1;
                    p[1] = k;
                    p[k as usize] = 0;
                    let c = Component::Perm(p);
                    gens.push(self.inverse(&c));
                    gens.push(c);
                }
                gens
            }
        };
        gens.sort();
        gens.dedup();
        gens
    }
}

fn permutations(p: &mut Vec<u8>, k: usize, out: &mut Vec<Vec<u8>>) {
    if k == p.len() {
        out.push(p.clone());
        return;
    }
    for i in k..p.len() {
        p.swap(k, i);
        permutations(p, k + 1, out);
        p.swap(k, i);
    }
}

fn is_even_permutation(p: &[u8]) -> bool {
    let n = p.len();
    let mut seen = vec![false; n];
    let mut transpositions = 0usize;
    for start in 0..n {
        if seen[start] || p[start] as usize >= n {
            continue;
        }
        let mut len = 0;
        let mut i = start;
        while !seen[i] {
            seen[i] = true;
            i = p[i] as usize;
            if i >= n {
                return false;
            }
            len += 1;
        }
        transpositions += len - 1;
    }
    seen.iter().all(|&s| s) && transpositions.is_multiple_of(2)
}

/// Normal form of a group element.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GroupElement {
    /// ℤⁿ.
    Vector(Vec<i64>),
    /// Upper unitriangular integer matrix [[1,a,c],[0,1,b],[0,0,1]] stored as (a, b, c).
    Heisenberg([i64; 3]),
    /// ℤ/m₁ × … × ℤ/m_k.
    Residues(Vec<u32>),
    /// Element of a finite alternating group, as an image array.
    Perm(Vec<u8>),
    /// Direct-sum element: (1-based index, non-identity component), sorted by index.
    Sparse(Vec<(u32, Component)>),
}

impl GroupElement {
    /// Order-preserving byte encoding: `a.cmp(b) == a.encode().cmp(&b.encode())`
    /// for elements of the same group.
    pub fn encode(&self) -> Vec<u8> {
        fn int(out: &mut Vec<u8>, x: i64) {
            out.extend_from_slice(&((x as u64) ^ (1u64 << 63)).to_be_bytes());
        }
        fn comp(out: &mut Vec<u8>, c: &Component) {
            match c {
                Component::Residue(r) => {
                    out.push(0);
                    out.extend_from_slice(&r.to_be_bytes());
                }
                Component::Perm(p) => {
                    out.push(1);
                    out.extend_from_slice(p);
                }
            }
        }
        let mut out = Vec::new();
        match self {
            GroupElement::Vector(v) => {
                out.push(0);
                v.iter().for_each(|&x| int(&mut out, x));
            }
            GroupElement::Heisenberg(t) => {
                out.push(1);
                t.iter().for_each(|&x| int(&mut out, x));
            }
            GroupElement::Residues(r) => {
                out.push(2);
                r.iter().for_each(|x| out.extend_from_slice(&x.to_be_bytes()));
            }
            GroupElement::Perm(p) => {
                out.push(3);
                out.extend_from_slice(p);
            }
            GroupElement::Sparse(entries) => {
                out.push(4);
                for (i, c) in entries {
                    out.extend_from_slice(&i.to_be_bytes());
                    comp(&mut out, c);
                }
            }
        }
        out
    }

    /// Integer value of a rank-one vector element.
    pub fn as_int(&self) -> Option<i64> {
        match self {
            GroupElement::Vector(v) if v.len() == 1 => Some(v[0]),
            _ => None,
        }
    }
}

impl std::fmt::Display for GroupElement {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GroupElement::Vector(v) if v.len() == 1 => write!(f, "{}", v[0]),
            GroupElement::Vector(v) => write!(f, "{v:?}"),
            GroupElement::Heisenberg([a, b, c]) => write!(f, "({a},{b},{c})"),
            GroupElement::Residues(r) => write!(f, "{r:?}"),
            GroupElement::Perm(p) => write!(f, "perm{p:?}"),
            GroupElement::Sparse(e) => {
                write!(f, "{{")?;
                for (k, (i, c)) in e.iter().enumerate() {
                    if k > 0 {
                        write!(f, ",")?;
                    }
                    match c {
                        Component::Residue(r) => write!(f, "{i}:{r}")?,
                        Component::Perm(p) => write!(f, "{i}:{p:?}")?,
                    }
                }
                write!(f, "}}")
            }
        }
    }
}

/// The sequence of component groups G₁, G₂, … of a direct sum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ComponentSeq {
    /// Listed groups; the last one repeats forever.
    Repeating(Vec<FiniteGroup>),
    /// G_n = ℤ/(n+1)ℤ.
    CyclicIncreasing,
}

impl ComponentSeq {
    pub fn component(&self, n: u32) -> FiniteGroup {
        assert!(n >= 1, "direct-sum components are 1-based");
        match self {
            ComponentSeq::Repeating(list) => list[(n as usize - 1).min(list.len() - 1)].clone(),
            ComponentSeq::CyclicIncreasing => FiniteGroup::Cyclic(n + 1),
        }
    }
}

/// Weight sequence a₁ < a₂ < … for the max-weight length on a direct sum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum WeightSeq {
    /// a_k = 2^{k²}.
    Pow2KSquared,
    /// a_n = |G₁|·…·|G_n|.
    CatchUp,
    /// a_n = γⁿ.
    Geometric { gamma: f64 },
    /// a₁ = 1 and a_{n+1}/a_n = 2^{γ₁} on odd blocks, 2^{γ₂} on even blocks.
    /// Blocks start at N₁ = 1 and N_{k+1} = max(N_k + 1, ⌈factor·N_k⌉).
    Oscillating { gamma1: f64, gamma2: f64, block_factor: f64 },
    /// Explicit finite list; later terms are treated as infinite.
    Explicit(Vec<f64>),
}

/// Weights beyond this index are never materialized.
const MAX_WEIGHT_TERMS: usize = 4096;

/// Infinite direct sum of finite groups with a weight sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectSum {
    pub components: ComponentSeq,
    pub weights: WeightSeq,
    /// a_1, a_2, … up to the first non-finite term (exclusive).
    table: Vec<f64>,
}

impl DirectSum {
    pub fn new(components: ComponentSeq, weights: WeightSeq) -> Result<Self> {
        if let ComponentSeq::Repeating(list) = &components {
            if list.is_empty() {
                return Err(QmError::InvalidParameters("direct sum needs at least one component group".into()));
            }
            for g in list {
                g.validate()?;
            }
        }
        let table = Self::materialize(&components, &weights)?;
        if table.is_empty() {
            return Err(QmError::InvalidParameters("empty weight sequence".into()));
        }
        if table[0] < 1.0 {
            return Err(QmError::InvalidParameters(format!("a_1 = {} must be at least 1", table[0])));
        }
        if let Some(w) = table.windows(2).position(|w| w[1] <= w[0]) {
            return Err(QmError::InvalidParameters(format!(
                "weights must be strictly increasing: a_{} = {} >= a_{} = {}",
                w + 1,
                table[w],
                w + 2,
                table[w + 1]
            )));
        }
        Ok(DirectSum { components, weights, table })
    }

    fn materialize(components: &ComponentSeq, weights: &WeightSeq) -> Result<Vec<f64>> {
        let mut out = Vec::new();
        match weights {
            WeightSeq::Pow2KSquared => {
                for k in 1..MAX_WEIGHT_TERMS {
                    let a = 2f64.powi((k * k) as i32);
                    if !a.is_finite() {
                        break;
                    }
                    out.push(a);
                }
            }
            WeightSeq::CatchUp => {
                let mut a = 1f64;
                for n in 1..MAX_WEIGHT_TERMS as u32 {
                    a *= components.component(n).order() as f64;
                    if !a.is_finite() {
                        break;
                    }
                    out.push(a);
                }
            }
            WeightSeq::Geometric { gamma } => {
                if !(*gamma > 1.0) {
                    return Err(QmError::InvalidParameters(format!("geometric weight ratio {gamma} must exceed 1")));
                }
                for n in 1..MAX_WEIGHT_TERMS {
                    let a = gamma.powi(n as i32);
                    if !a.is_finite() {
                        break;
                    }
                    out.push(a);
                }
            }
            WeightSeq::Oscillating { gamma1, gamma2, block_factor } => {
                if !(*gamma1 > 0.0 && gamma2 > gamma1 && *block_factor > 1.0) {
                    return Err(QmError::InvalidParameters(format!(
                        "oscillating weights need 0 < gamma1 < gamma2 and block_factor > 1, \
                         got ({gamma1}, {gamma2}, {block_factor})"
                    )));
                }
                // log2 of a_n, accumulated as a sum of exponents.
                let mut log2a = 0f64;
                for n in 1..MAX_WEIGHT_TERMS {
                    let a = log2a.exp2();
                    if !a.is_finite() {
                        break;
                    }
                    out.push(a);
                    log2a += if block_of(n, *block_factor) % 2 == 1 { *gamma1 } else { *gamma2 };
                }
            }
            WeightSeq::Explicit(list) => {
                if list.iter().any(|a| !a.is_finite()) {
                    return Err(QmError::InvalidParameters("non-finite explicit weight".into()));
                }
                out.extend_from_slice(list);
            }
        }
        Ok(out)
    }

    /// a_n (1-based); infinite beyond the materialized table.
    pub fn weight(&self, n: u32) -> f64 {
        self.table.get(n as usize - 1).copied().unwrap_or(f64::INFINITY)
    }

    /// Number of indices n with a_n <= r.
    pub fn count_at_most(&self, r: f64) -> usize {
        self.table.partition_point(|&a| a <= r)
    }

    pub fn weights_table(&self) -> &[f64] {
        &self.table
    }
}

fn next_block_start(start: usize, factor: f64) -> usize {
    ((start as f64 * factor).ceil() as usize).max(start + 1)
}

/// Block index k with N_k <= n < N_{k+1}.
fn block_of(n: usize, factor: f64) -> usize {
    let mut k = 1;
    let mut start = 1usize;
    loop {
        let next = next_block_start(start, factor);
        if n < next {
            return k;
        }
        start = next;
        k += 1;
    }
}

/// A concrete group family with its parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum GroupDescriptor {
    FreeAbelian { rank: usize },
    Heisenberg,
    FiniteProduct { orders: Vec<u32> },
    FiniteSimple { degree: u8 },
    DirectSum(DirectSum),
}

impl GroupDescriptor {
    pub fn free_abelian(rank: usize) -> Result<Self> {
        if rank == 0 {
            return Err(QmError::InvalidParameters("rank must be at least 1".into()));
        }
        Ok(GroupDescriptor::FreeAbelian { rank })
    }

    pub fn integers() -> Self {
        GroupDescriptor::FreeAbelian { rank: 1 }
    }

    pub fn finite_product(orders: Vec<u32>) -> Result<Self> {
        if orders.is_empty() {
            return Err(QmError::InvalidParameters("finite product needs a factor".into()));
        }
        for &m in &orders {
            FiniteGroup::Cyclic(m).validate()?;
        }
        Ok(GroupDescriptor::FiniteProduct { orders })
    }

    pub fn finite_simple(degree: u8) -> Result<Self> {
        if degree < 5 {
            return Err(QmError::InvalidParameters(format!(
                "A_{degree} is not a non-abelian simple group; degree must be at least 5"
            )));
        }
        FiniteGroup::Alternating(degree).validate()?;
        Ok(GroupDescriptor::FiniteSimple { degree })
    }

    pub fn direct_sum(components: ComponentSeq, weights: WeightSeq) -> Result<Self> {
        Ok(GroupDescriptor::DirectSum(DirectSum::new(components, weights)?))
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            GroupDescriptor::FreeAbelian { .. } => "free-abelian",
            GroupDescriptor::Heisenberg => "heisenberg",
            GroupDescriptor::FiniteProduct { .. } => "finite-product",
            GroupDescriptor::FiniteSimple { .. } => "finite-simple",
            GroupDescriptor::DirectSum(_) => "direct-sum",
        }
    }

    pub fn identity(&self) -> GroupElement {
        match self {
            GroupDescriptor::FreeAbelian { rank } => GroupElement::Vector(vec![0; *rank]),
            GroupDescriptor::Heisenberg => GroupElement::Heisenberg([0; 3]),
            GroupDescriptor::FiniteProduct { orders } => GroupElement::Residues(vec![0; orders.len()]),
            GroupDescriptor::FiniteSimple { degree } => GroupElement::Perm((0..*degree).collect()),
            GroupDescriptor::DirectSum(_) => GroupElement::Sparse(Vec::new()),
        }
    }

    /// Whether `g` is a well-formed normal form of this group.
    pub fn contains(&self, g: &GroupElement) -> bool {
        match (self, g) {
            (GroupDescriptor::FreeAbelian { rank }, GroupElement::Vector(v)) => v.len() == *rank,
            (GroupDescriptor::Heisenberg, GroupElement::Heisenberg(_)) => true,
            (GroupDescriptor::FiniteProduct { orders }, GroupElement::Residues(r)) => {
                r.len() == orders.len() && r.iter().zip(orders).all(|(x, m)| x < m)
            }
            (GroupDescriptor::FiniteSimple { degree }, GroupElement::Perm(p)) => {
                FiniteGroup::Alternating(*degree).contains(&Component::Perm(p.clone()))
            }
            (GroupDescriptor::DirectSum(ds), GroupElement::Sparse(e)) => {
                e.windows(2).all(|w| w[0].0 < w[1].0)
                    && e.iter().all(|(i, c)| {
                        *i >= 1 && {
                            let gi = ds.components.component(*i);
                            gi.contains(c) && *c != gi.identity()
                        }
                    })
            }
            _ => false,
        }
    }

    /// Group law, rejecting elements of another family.
    pub fn compose(&self, g: &GroupElement, h: &GroupElement) -> Result<GroupElement> {
        if !self.contains(g) || !self.contains(h) {
            return Err(QmError::Usage(format!(
                "operands {g} and {h} are not both elements of the {} group",
                self.family_name()
            )));
        }
        Ok(self.mul(g, h))
    }

    /// Group law without membership checks. Panics on mixed families and on
    /// integer overflow.
    pub fn mul(&self, g: &GroupElement, h: &GroupElement) -> GroupElement {
        match (self, g, h) {
            (GroupDescriptor::FreeAbelian { .. }, GroupElement::Vector(a), GroupElement::Vector(b)) => {
                GroupElement::Vector(a.iter().zip(b).map(|(x, y)| checked_add(*x, *y)).collect())
            }
            (GroupDescriptor::Heisenberg, GroupElement::Heisenberg(a), GroupElement::Heisenberg(b)) => {
                let ab = a[0].checked_mul(b[1]).unwrap_or_else(|| overflow("heisenberg product", a[0], b[1]));
                GroupElement::Heisenberg([
                    checked_add(a[0], b[0]),
                    checked_add(a[1], b[1]),
                    checked_add(checked_add(a[2], b[2]), ab),
                ])
            }
            (GroupDescriptor::FiniteProduct { orders }, GroupElement::Residues(a), GroupElement::Residues(b)) => {
                GroupElement::Residues(
                    a.iter()
                        .zip(b)
                        .zip(orders)
                        .map(|((x, y), m)| ((*x as u64 + *y as u64) % *m as u64) as u32)
                        .collect(),
                )
            }
            (GroupDescriptor::FiniteSimple { degree }, GroupElement::Perm(_), GroupElement::Perm(_)) => {
                let grp = FiniteGroup::Alternating(*degree);
                match grp.compose(&to_component(g), &to_component(h)) {
                    Component::Perm(p) => GroupElement::Perm(p),
                    Component::Residue(_) => unreachable!(),
                }
            }
            (GroupDescriptor::DirectSum(ds), GroupElement::Sparse(a), GroupElement::Sparse(b)) => {
                GroupElement::Sparse(sparse_mul(ds, a, b))
            }
            _ => panic!("cannot compose {g} and {h} in the {} group", self.family_name()),
        }
    }

    pub fn inverse(&self, g: &GroupElement) -> GroupElement {
        match (self, g) {
            (_, GroupElement::Vector(a)) => GroupElement::Vector(a.iter().map(|x| checked_neg(*x)).collect()),
            (_, GroupElement::Heisenberg([a, b, c])) => {
                let ab = a.checked_mul(*b).unwrap_or_else(|| overflow("heisenberg inverse", *a, *b));
                GroupElement::Heisenberg([
                    checked_neg(*a),
                    checked_neg(*b),
                    ab.checked_sub(*c).unwrap_or_else(|| overflow("heisenberg inverse", ab, *c)),
                ])
            }
            (GroupDescriptor::FiniteProduct { orders }, GroupElement::Residues(r)) => {
                GroupElement::Residues(r.iter().zip(orders).map(|(x, m)| if *x == 0 { 0 } else { m - x }).collect())
            }
            (GroupDescriptor::FiniteSimple { degree }, GroupElement::Perm(_)) => {
                match FiniteGroup::Alternating(*degree).inverse(&to_component(g)) {
                    Component::Perm(p) => GroupElement::Perm(p),
                    Component::Residue(_) => unreachable!(),
                }
            }
            (GroupDescriptor::DirectSum(ds), GroupElement::Sparse(e)) => {
                GroupElement::Sparse(e.iter().map(|(i, c)| (*i, ds.components.component(*i).inverse(c))).collect())
            }
            _ => panic!("{g} is not an element of the {} group", self.family_name()),
        }
    }

    /// Symmetric generating set, for finitely generated families.
    pub fn generators(&self) -> Result<Vec<GroupElement>> {
        let mut gens = match self {
            GroupDescriptor::FreeAbelian { rank } => {
                let mut out = Vec::new();
                for i in 0..*rank {
                    for s in [1, -1] {
                        let mut v = vec![0; *rank];
                        v[i] = s;
                        out.push(GroupElement::Vector(v));
                    }
                }
                out
            }
            GroupDescriptor::Heisenberg => vec![
                GroupElement::Heisenberg([1, 0, 0]),
                GroupElement::Heisenberg([-1, 0, 0]),
                GroupElement::Heisenberg([0, 1, 0]),
                GroupElement::Heisenberg([0, -1, 0]),
            ],
            GroupDescriptor::FiniteProduct { orders } => {
                let mut out = Vec::new();
                for (i, &m) in orders.iter().enumerate() {
                    for s in [1, m - 1] {
                        let mut v = vec![0; orders.len()];
                        v[i] = s;
                        out.push(GroupElement::Residues(v));
                    }
                }
                out
            }
            GroupDescriptor::FiniteSimple { degree } => FiniteGroup::Alternating(*degree)
                .generators()
                .into_iter()
                .map(|c| match c {
                    Component::Perm(p) => GroupElement::Perm(p),
                    Component::Residue(_) => unreachable!(),
                })
                .collect(),
            GroupDescriptor::DirectSum(_) => {
                return Err(QmError::Unsupported("an infinite direct sum is not finitely generated".into()))
            }
        };
        gens.sort();
        gens.dedup();
        Ok(gens)
    }

    /// Random element for sampling-based checks. `scale` bounds coordinates for
    /// infinite families and the component index range for direct sums.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, scale: i64) -> GroupElement {
        let scale = scale.max(1);
        match self {
            GroupDescriptor::FreeAbelian { rank } => {
                GroupElement::Vector((0..*rank).map(|_| rng.gen_range(-scale..=scale)).collect())
            }
            GroupDescriptor::Heisenberg => GroupElement::Heisenberg([
                rng.gen_range(-scale..=scale),
                rng.gen_range(-scale..=scale),
                rng.gen_range(-scale * scale..=scale * scale),
            ]),
            GroupDescriptor::FiniteProduct { orders } => {
                GroupElement::Residues(orders.iter().map(|&m| rng.gen_range(0..m)).collect())
            }
            GroupDescriptor::FiniteSimple { degree } => {
                let elems = FiniteGroup::Alternating(*degree).elements();
                match &elems[rng.gen_range(0..elems.len())] {
                    Component::Perm(p) => GroupElement::Perm(p.clone()),
                    Component::Residue(_) => unreachable!(),
                }
            }
            GroupDescriptor::DirectSum(ds) => {
                let top = (scale as u32).min(ds.table.len().max(1) as u32);
                let mut entries = Vec::new();
                for i in 1..=top {
                    if rng.gen_bool(0.5) {
                        let gi = ds.components.component(i);
                        let elems = gi.elements();
                        let c = elems[rng.gen_range(1..elems.len())].clone();
                        if c != gi.identity() {
                            entries.push((i, c));
                        }
                    }
                }
                GroupElement::Sparse(entries)
            }
        }
    }
}

fn to_component(g: &GroupElement) -> Component {
    match g {
        GroupElement::Perm(p) => Component::Perm(p.clone()),
        _ => unreachable!(),
    }
}

fn sparse_mul(ds: &DirectSum, a: &[(u32, Component)], b: &[(u32, Component)]) -> Vec<(u32, Component)> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        if j == b.len() || (i < a.len() && a[i].0 < b[j].0) {
            out.push(a[i].clone());
            i += 1;
        } else if i == a.len() || b[j].0 < a[i].0 {
            out.push(b[j].clone());
            j += 1;
        } else {
            let idx = a[i].0;
            let gi = ds.components.component(idx);
            let c = gi.compose(&a[i].1, &b[j].1);
            if c != gi.identity() {
                out.push((idx, c));
            }
            i += 1;
            j += 1;
        }
    }
    out
}

fn checked_add(x: i64, y: i64) -> i64 {
    x.checked_add(y).unwrap_or_else(|| overflow("addition", x, y))
}

fn checked_neg(x: i64) -> i64 {
    x.checked_neg().unwrap_or_else(|| overflow("negation", x, 0))
}

fn overflow(op: &str, x: i64, y: i64) -> ! {
    panic!("integer overflow in {op} ({x}, {y}); coordinates exceed 64-bit range")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn z2() -> GroupDescriptor {
        GroupDescriptor::free_abelian(2).unwrap()
    }

    fn z2_sum() -> GroupDescriptor {
        GroupDescriptor::direct_sum(ComponentSeq::Repeating(vec![FiniteGroup::Cyclic(2)]), WeightSeq::Pow2KSquared)
            .unwrap()
    }

    fn families() -> Vec<GroupDescriptor> {
        vec![
            GroupDescriptor::integers(),
            z2(),
            GroupDescriptor::free_abelian(3).unwrap(),
            GroupDescriptor::Heisenberg,
            GroupDescriptor::finite_product(vec![2, 3, 5]).unwrap(),
            GroupDescriptor::finite_simple(5).unwrap(),
            z2_sum(),
            GroupDescriptor::direct_sum(ComponentSeq::CyclicIncreasing, WeightSeq::CatchUp).unwrap(),
            GroupDescriptor::direct_sum(
                ComponentSeq::Repeating(vec![FiniteGroup::Alternating(5)]),
                WeightSeq::Geometric { gamma: 2.0 },
            )
            .unwrap(),
        ]
    }

    #[test]
    fn compose_examples() {
        let g = z2();
        assert_eq!(
            g.compose(&GroupElement::Vector(vec![1, 2]), &GroupElement::Vector(vec![3, -1])).unwrap(),
            GroupElement::Vector(vec![4, 1])
        );
        let h = GroupDescriptor::Heisenberg;
        assert_eq!(
            h.mul(&GroupElement::Heisenberg([1, 0, 0]), &GroupElement::Heisenberg([0, 1, 0])),
            GroupElement::Heisenberg([1, 1, 1])
        );
        let s = z2_sum();
        let one = Component::Residue(1);
        let x = GroupElement::Sparse(vec![(1, one.clone()), (3, one.clone())]);
        let y = GroupElement::Sparse(vec![(3, one.clone()), (5, one.clone())]);
        assert_eq!(s.compose(&x, &y).unwrap(), GroupElement::Sparse(vec![(1, one.clone()), (5, one)]));
    }

    #[test]
    fn mixed_family_is_usage_error() {
        let err = z2().compose(&GroupElement::Vector(vec![1, 2]), &GroupElement::Heisenberg([0, 0, 0])).unwrap_err();
        assert!(matches!(err, QmError::Usage(_)));
        let err = z2().compose(&GroupElement::Vector(vec![1]), &GroupElement::Vector(vec![1, 2])).unwrap_err();
        assert!(matches!(err, QmError::Usage(_)));
    }

    #[test]
    fn inverse_examples() {
        assert_eq!(z2().inverse(&GroupElement::Vector(vec![3, -1])), GroupElement::Vector(vec![-3, 1]));
        assert_eq!(
            GroupDescriptor::Heisenberg.inverse(&GroupElement::Heisenberg([1, 1, 1])),
            GroupElement::Heisenberg([-1, -1, 0])
        );
        for g in families() {
            let e = g.identity();
            assert_eq!(g.inverse(&e), e);
        }
    }

    #[test]
    fn identity_examples() {
        assert_eq!(GroupDescriptor::free_abelian(3).unwrap().identity(), GroupElement::Vector(vec![0, 0, 0]));
        assert_eq!(GroupDescriptor::Heisenberg.identity(), GroupElement::Heisenberg([0, 0, 0]));
        assert_eq!(z2_sum().identity(), GroupElement::Sparse(vec![]));
    }

    #[test]
    fn generator_examples() {
        let gens = z2().generators().unwrap();
        assert_eq!(gens.len(), 4);
        for v in [[1, 0], [-1, 0], [0, 1], [0, -1]] {
            assert!(gens.contains(&GroupElement::Vector(v.to_vec())));
        }
        let h = GroupDescriptor::Heisenberg.generators().unwrap();
        assert_eq!(h.len(), 4);
        assert!(h.contains(&GroupElement::Heisenberg([0, -1, 0])));
        let z5 = GroupDescriptor::finite_product(vec![5]).unwrap().generators().unwrap();
        assert_eq!(z5, vec![GroupElement::Residues(vec![1]), GroupElement::Residues(vec![4])]);
        assert!(matches!(z2_sum().generators(), Err(QmError::Unsupported(_))));
    }

    #[test]
    fn generating_sets_are_symmetric() {
        for g in families() {
            if let Ok(gens) = g.generators() {
                for s in &gens {
                    assert!(gens.contains(&g.inverse(s)), "{s} in {}", g.family_name());
                }
            }
        }
    }

    #[test]
    fn alternating_group_has_sixty_elements() {
        let a5 = FiniteGroup::Alternating(5);
        assert_eq!(a5.order(), 60);
        assert_eq!(a5.elements().len(), 60);
    }

    #[test]
    fn parameter_validation() {
        assert!(GroupDescriptor::free_abelian(0).is_err());
        assert!(GroupDescriptor::finite_product(vec![3, 1]).is_err());
        assert!(GroupDescriptor::finite_simple(4).is_err());
        assert!(GroupDescriptor::direct_sum(
            ComponentSeq::Repeating(vec![FiniteGroup::Cyclic(2)]),
            WeightSeq::Explicit(vec![1.0, 3.0, 2.0]),
        )
        .is_err());
        assert!(GroupDescriptor::direct_sum(
            ComponentSeq::Repeating(vec![FiniteGroup::Cyclic(2)]),
            WeightSeq::Explicit(vec![0.5, 3.0]),
        )
        .is_err());
    }

    #[test]
    fn weight_sequences() {
        let GroupDescriptor::DirectSum(ds) = z2_sum() else { unreachable!() };
        assert_eq!(ds.weight(1), 2.0);
        assert_eq!(ds.weight(2), 16.0);
        assert_eq!(ds.weight(5), 2f64.powi(25));
        let GroupDescriptor::DirectSum(cu) =
            GroupDescriptor::direct_sum(ComponentSeq::CyclicIncreasing, WeightSeq::CatchUp).unwrap()
        else {
            unreachable!()
        };
        assert_eq!(&cu.weights_table()[..6], &[2.0, 6.0, 24.0, 120.0, 720.0, 5040.0]);
        let GroupDescriptor::DirectSum(osc) = GroupDescriptor::direct_sum(
            ComponentSeq::Repeating(vec![FiniteGroup::Cyclic(2)]),
            WeightSeq::Oscillating { gamma1: 2.0, gamma2: 4.0, block_factor: 4.0 },
        )
        .unwrap() else {
            unreachable!()
        };
        // Blocks start at n = 1, 4, 16, ...: ratios 2^2 for n in 1..4, 2^4 for n in 4..16.
        let t = osc.weights_table();
        assert_eq!(t[0], 1.0);
        assert_eq!(t[1] / t[0], 4.0);
        assert_eq!(t[3] / t[2], 4.0);
        assert_eq!(t[4] / t[3], 16.0);
        assert_eq!(t[16] / t[15], 4.0);
    }

    #[test]
    fn group_axioms_on_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for g in families() {
            for _ in 0..1000 {
                let a = g.sample(&mut rng, 20);
                let b = g.sample(&mut rng, 20);
                let c = g.sample(&mut rng, 20);
                assert!(g.contains(&a));
                assert_eq!(g.mul(&g.mul(&a, &b), &c), g.mul(&a, &g.mul(&b, &c)));
                assert_eq!(g.mul(&a, &g.inverse(&a)), g.identity());
                assert_eq!(g.inverse(&g.inverse(&a)), a);
                assert_eq!(g.mul(&a, &g.identity()), a);
                assert_eq!(g.mul(&g.identity(), &a), a);
            }
        }
    }

    #[test]
    fn encoding_is_canonical_and_order_preserving() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for g in families() {
            for _ in 0..500 {
                let a = g.sample(&mut rng, 5);
                let b = g.sample(&mut rng, 5);
                assert_eq!(a == b, a.encode() == b.encode());
                assert_eq!(a.cmp(&b), a.encode().cmp(&b.encode()), "{a} vs {b}");
                // re-encoding a recomposed copy is byte-identical
                let again = g.mul(&g.identity(), &a);
                assert_eq!(again.encode(), a.encode());
            }
        }
    }

    #[test]
    #[should_panic(expected = "overflow")]
    fn overflow_aborts() {
        let g = GroupDescriptor::integers();
        g.mul(&GroupElement::Vector(vec![i64::MAX]), &GroupElement::Vector(vec![1]));
    }
}
