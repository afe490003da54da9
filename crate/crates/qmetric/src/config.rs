//! Experiment configuration: strict JSON, unknown keys and stringly numbers rejected.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use qmetric_core::algebra::AlgebraElement;
use qmetric_core::group::{Component, ComponentSeq, FiniteGroup, GroupDescriptor, GroupElement, WeightSeq};
use qmetric_core::length::{LengthFunction, LengthKind, DEFAULT_BALL_CAP};
use qmetric_core::metric::{Constraint, StateDescriptor};
use qmetric_core::{QmError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Growth,
    Seminorm,
    Decompose,
    Verify,
    Metric,
    CoveringDemo,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Growth => "growth",
            Command::Seminorm => "seminorm",
            Command::Decompose => "decompose",
            Command::Verify => "verify",
            Command::Metric => "metric",
            Command::CoveringDemo => "covering-demo",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub group: GroupSpec,
    #[serde(default)]
    pub length: Option<LengthSpec>,
    /// When present, must match the command given on the command line.
    #[serde(default)]
    pub command: Option<Command>,
    #[serde(default)]
    pub ball_cap: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub growth: Option<GrowthParams>,
    #[serde(default)]
    pub seminorm: Option<SeminormParams>,
    #[serde(default)]
    pub decompose: Option<DecomposeParams>,
    #[serde(default)]
    pub verify: Option<VerifyParams>,
    #[serde(default)]
    pub metric: Option<MetricParams>,
    #[serde(default)]
    pub covering: Option<CoveringParams>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GroupSpec {
    Integers {},
    FreeAbelian { rank: usize },
    Heisenberg {},
    FiniteProduct { orders: Vec<u32> },
    FiniteSimple { degree: u8 },
    DirectSum { components: ComponentsSpec, weights: WeightsSpec },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ComponentsKeyword {
    CyclicIncreasing,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ComponentsSpec {
    /// Cyclic orders; the last repeats.
    Cyclic(Vec<u32>),
    Keyword(ComponentsKeyword),
    Alternating {
        alternating: u8,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightsKeyword {
    Pow2Ksquared,
    CatchUp,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum WeightsSpec {
    Keyword(WeightsKeyword),
    Geometric { geometric: f64 },
    Oscillating { gamma1: f64, gamma2: f64, block_factor: f64 },
    Explicit(Vec<f64>),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LengthSpec {
    Word {
        #[serde(default = "one")]
        scale: f64,
    },
    MaxWeight {},
    LogAbs {},
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum RadiiSpec {
    List(Vec<f64>),
    /// 1, 2, ..., n.
    Linear {
        linear: u32,
    },
    /// base^0, ..., base^(count-1).
    Geometric {
        base: f64,
        count: u32,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrowthParams {
    pub radii: RadiiSpec,
    /// Row indices [lo, hi) used for the degree fit.
    #[serde(default)]
    pub window: Option<[usize; 2]>,
    /// Exact max doubling ratio over [lo, hi].
    #[serde(default)]
    pub doubling_range: Option<[f64; 2]>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSpec {
    pub size: usize,
    pub support_radius: f64,
    /// Inclusive range of support sizes.
    #[serde(default = "default_atoms")]
    pub atoms: [usize; 2],
    /// Real coefficients only.
    #[serde(default = "yes")]
    pub real: bool,
    /// Exclude the identity from supports.
    #[serde(default)]
    pub vanish_at_identity: bool,
}

fn default_atoms() -> [usize; 2] {
    [1, 6]
}

fn yes() -> bool {
    true
}

/// An element given as [[element, re], [element, re, im], ...].
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElementSpec {
    pub atoms: Vec<Vec<Value>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeminormParams {
    #[serde(default)]
    pub elements: Vec<ElementSpec>,
    #[serde(default)]
    pub corpus: Option<CorpusSpec>,
    /// Truncation radii for the L_D bracket; defaults to Lmax, 2Lmax, 3Lmax, 4Lmax.
    #[serde(default)]
    pub lipnorm_radii: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecomposeParams {
    #[serde(default = "default_k")]
    pub k: u32,
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub n: Option<u32>,
    /// Doubling constant; the observed maximum when absent.
    #[serde(default)]
    pub doubling: Option<f64>,
    #[serde(default)]
    pub elements: Vec<ElementSpec>,
    #[serde(default)]
    pub corpus: Option<CorpusSpec>,
    /// Scale every element to J_D(f) = 1 first.
    #[serde(default = "yes")]
    pub normalize: bool,
}

fn default_k() -> u32 {
    2
}

fn default_n() -> u32 {
    2
}

fn default_n_max() -> u32 {
    3
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyParams {
    #[serde(default = "default_k")]
    pub k: u32,
    #[serde(default = "default_n")]
    pub n: u32,
    #[serde(default = "default_n_max")]
    pub n_max: u32,
    #[serde(default)]
    pub doubling: Option<f64>,
    #[serde(default)]
    pub elements: Vec<ElementSpec>,
    #[serde(default)]
    pub corpus: Option<CorpusSpec>,
    /// Ball on which the cutoff shape statements are checked exhaustively.
    #[serde(default)]
    pub family_radius: Option<f64>,
    #[serde(default = "yes")]
    pub include_n1: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StateSpec {
    Trace {},
    /// ξ as atoms; normalized on use.
    Vector {
        xi: Vec<Vec<Value>>,
    },
    Mixture {
        parts: Vec<(f64, StateSpec)>,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatePair {
    pub mu: StateSpec,
    pub nu: StateSpec,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomPairs {
    pub count: usize,
    /// Vector states draw ξ from this ball.
    pub support_radius: f64,
    #[serde(default = "default_xi_atoms")]
    pub atoms: [usize; 2],
}

fn default_xi_atoms() -> [usize; 2] {
    [1, 3]
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricParams {
    #[serde(default)]
    pub pairs: Vec<StatePair>,
    #[serde(default)]
    pub random_pairs: Option<RandomPairs>,
    /// Slice radius for the ascent and cap for the atom search.
    pub radius: f64,
    #[serde(default = "both_constraints")]
    pub constraints: Vec<Constraint>,
    #[serde(default = "default_iterations")]
    pub max_iterations: usize,
}

fn both_constraints() -> Vec<Constraint> {
    vec![Constraint::L1, Constraint::Jd]
}

fn default_iterations() -> usize {
    qmetric_core::metric::DEFAULT_ITERATIONS
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoveringParams {
    #[serde(default = "default_k")]
    pub k: u32,
    #[serde(default = "default_n")]
    pub n: u32,
    /// Net radius in operator norm.
    pub epsilon: f64,
    #[serde(default)]
    pub doubling: Option<f64>,
    pub corpus: CorpusSpec,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| QmError::Usage(format!("invalid config: {e}")))
    }

    pub fn group(&self) -> Result<GroupDescriptor> {
        match &self.group {
            GroupSpec::Integers {} => Ok(GroupDescriptor::integers()),
            GroupSpec::FreeAbelian { rank } => GroupDescriptor::free_abelian(*rank),
            GroupSpec::Heisenberg {} => Ok(GroupDescriptor::Heisenberg),
            GroupSpec::FiniteProduct { orders } => GroupDescriptor::finite_product(orders.clone()),
            GroupSpec::FiniteSimple { degree } => GroupDescriptor::finite_simple(*degree),
            GroupSpec::DirectSum { components, weights } => {
                let c = match components {
                    ComponentsSpec::Cyclic(orders) => {
                        ComponentSeq::Repeating(orders.iter().map(|&m| FiniteGroup::Cyclic(m)).collect())
                    }
                    ComponentsSpec::Keyword(ComponentsKeyword::CyclicIncreasing) => ComponentSeq::CyclicIncreasing,
                    ComponentsSpec::Alternating { alternating } => {
                        ComponentSeq::Repeating(vec![FiniteGroup::Alternating(*alternating)])
                    }
                };
                let w = match weights {
                    WeightsSpec::Keyword(WeightsKeyword::Pow2Ksquared) => WeightSeq::Pow2KSquared,
                    WeightsSpec::Keyword(WeightsKeyword::CatchUp) => WeightSeq::CatchUp,
                    WeightsSpec::Geometric { geometric } => WeightSeq::Geometric { gamma: *geometric },
                    WeightsSpec::Oscillating { gamma1, gamma2, block_factor } => {
                        WeightSeq::Oscillating { gamma1: *gamma1, gamma2: *gamma2, block_factor: *block_factor }
                    }
                    WeightsSpec::Explicit(v) => WeightSeq::Explicit(v.clone()),
                };
                GroupDescriptor::direct_sum(c, w)
            }
        }
    }

    /// The length function with the effective ball cap.
    pub fn length_function(&self, ball_cap: Option<usize>) -> Result<LengthFunction> {
        let group = Arc::new(self.group()?);
        let kind = match &self.length {
            Some(LengthSpec::Word { scale }) => LengthKind::Word { scale: *scale },
            Some(LengthSpec::MaxWeight {}) => LengthKind::MaxWeight,
            Some(LengthSpec::LogAbs {}) => LengthKind::LogAbs,
            None if matches!(group.as_ref(), GroupDescriptor::DirectSum(_)) => LengthKind::MaxWeight,
            None => LengthKind::Word { scale: 1.0 },
        };
        let cap = ball_cap.or(self.ball_cap).unwrap_or(DEFAULT_BALL_CAP);
        Ok(LengthFunction::new(group, kind)?.with_ball_cap(cap))
    }

    /// Checks that the section for `cmd` is present and the command matches.
    pub fn check_command(&self, cmd: Command) -> Result<()> {
        if let Some(c) = self.command {
            if c != cmd {
                return Err(QmError::Usage(format!(
                    "config is for command '{}' but '{}' was requested",
                    c.name(),
                    cmd.name()
                )));
            }
        }
        let present = match cmd {
            Command::Growth => self.growth.is_some(),
            Command::Seminorm => self.seminorm.is_some(),
            Command::Decompose => self.decompose.is_some(),
            Command::Verify => self.verify.is_some(),
            Command::Metric => self.metric.is_some(),
            Command::CoveringDemo => self.covering.is_some(),
        };
        if !present {
            let key = if cmd == Command::CoveringDemo { "covering" } else { cmd.name() };
            return Err(QmError::Usage(format!("config has no '{key}' section")));
        }
        Ok(())
    }
}

impl RadiiSpec {
    pub fn radii(&self) -> Result<Vec<f64>> {
        let r = match self {
            RadiiSpec::List(v) => v.clone(),
            RadiiSpec::Linear { linear } => qmetric_core::growth::linear_schedule(*linear),
            RadiiSpec::Geometric { base, count } => qmetric_core::growth::geometric_schedule(*base, *count),
        };
        if r.is_empty() || r.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(QmError::Usage("radii must be a nonempty list of positive numbers".into()));
        }
        Ok(r)
    }
}

fn int(v: &Value) -> Result<i64> {
    v.as_i64().ok_or_else(|| QmError::Usage(format!("expected an integer, got {v}")))
}

fn int_list(v: &Value) -> Result<Vec<i64>> {
    v.as_array().ok_or_else(|| QmError::Usage(format!("expected an integer list, got {v}")))?.iter().map(int).collect()
}

/// Parses a JSON element in the group's notation.
pub fn parse_element(group: &GroupDescriptor, v: &Value) -> Result<GroupElement> {
    let g = match group {
        GroupDescriptor::FreeAbelian { rank: 1 } if v.is_i64() => GroupElement::Vector(vec![int(v)?]),
        GroupDescriptor::FreeAbelian { .. } => GroupElement::Vector(int_list(v)?),
        GroupDescriptor::Heisenberg => {
            let t = int_list(v)?;
            if t.len() != 3 {
                return Err(QmError::Usage(format!("Heisenberg elements are [a, b, c], got {v}")));
            }
            GroupElement::Heisenberg([t[0], t[1], t[2]])
        }
        GroupDescriptor::FiniteProduct { .. } => {
            GroupElement::Residues(int_list(v)?.into_iter().map(|x| x as u32).collect())
        }
        GroupDescriptor::FiniteSimple { .. } => GroupElement::Perm(int_list(v)?.into_iter().map(|x| x as u8).collect()),
        GroupDescriptor::DirectSum(_) => {
            // [[index, residue or permutation], ...]
            let arr = v
                .as_array()
                .ok_or_else(|| QmError::Usage(format!("direct-sum elements are [[index, value], ...], got {v}")))?;
            let mut entries = Vec::new();
            for e in arr {
                let pair = e
                    .as_array()
                    .filter(|p| p.len() == 2)
                    .ok_or_else(|| QmError::Usage(format!("bad direct-sum entry {e}")))?;
                let idx = int(&pair[0])? as u32;
                let c = if pair[1].is_array() {
                    Component::Perm(int_list(&pair[1])?.into_iter().map(|x| x as u8).collect())
                } else {
                    Component::Residue(int(&pair[1])? as u32)
                };
                entries.push((idx, c));
            }
            entries.sort();
            GroupElement::Sparse(entries)
        }
    };
    if !group.contains(&g) {
        return Err(QmError::Usage(format!("{v} is not an element of the {} group", group.family_name())));
    }
    Ok(g)
}

fn number(v: &Value) -> Result<f64> {
    v.as_f64().ok_or_else(|| QmError::Usage(format!("expected a number, got {v}")))
}

/// Parses [[element, re], [element, re, im], ...].
pub fn parse_atoms(group: &GroupDescriptor, atoms: &[Vec<Value>]) -> Result<AlgebraElement> {
    let mut pairs = Vec::new();
    for a in atoms {
        let (re, im) = match a.len() {
            2 => (number(&a[1])?, 0.0),
            3 => (number(&a[1])?, number(&a[2])?),
            _ => return Err(QmError::Usage(format!("an atom is [element, re] or [element, re, im], got {a:?}"))),
        };
        pairs.push((parse_element(group, &a[0])?, Complex64::new(re, im)));
    }
    Ok(AlgebraElement::from_pairs(pairs))
}

pub fn parse_state(group: &GroupDescriptor, s: &StateSpec) -> Result<StateDescriptor> {
    match s {
        StateSpec::Trace {} => Ok(StateDescriptor::Trace),
        StateSpec::Vector { xi } => StateDescriptor::vector(parse_atoms(group, xi)?),
        StateSpec::Mixture { parts } => StateDescriptor::mixture(
            parts.iter().map(|(w, p)| Ok((*w, parse_state(group, p)?))).collect::<Result<Vec<_>>>()?,
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_unknown_keys_and_string_numbers() {
        assert!(ExperimentConfig::parse(r#"{"group":{"family":"integers"},"bogus":1}"#).is_err());
        assert!(ExperimentConfig::parse(r#"{"group":{"family":"free-abelian","rank":"2"}}"#).is_err());
        assert!(ExperimentConfig::parse(r#"{"group":{"family":"integers","rank":2}}"#).is_err());
        assert!(ExperimentConfig::parse(r#"{"growth":{"radii":[1,2]}}"#).is_err());
        assert!(
            ExperimentConfig::parse(r#"{"group":{"family":"integers"},"growth":{"radii":{"linear":"4"}}}"#).is_err()
        );
        let c =
            ExperimentConfig::parse(r#"{"group":{"family":"free-abelian","rank":2},"growth":{"radii":{"linear":4}}}"#)
                .unwrap();
        assert_eq!(c.growth.unwrap().radii.radii().unwrap(), vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn direct_sum_groups() {
        let c =
            ExperimentConfig::parse(r#"{"group":{"family":"direct-sum","components":[2],"weights":"pow2-ksquared"}}"#)
                .unwrap();
        let l = c.length_function(None).unwrap();
        assert_eq!(l.ball_size(16.0).unwrap(), 4);
        let c = ExperimentConfig::parse(
            r#"{"group":{"family":"direct-sum","components":"cyclic-increasing","weights":"catch-up"}}"#,
        )
        .unwrap();
        assert!(c.group().is_ok());
        let g = c.group().unwrap();
        let x = parse_element(&g, &serde_json::json!([[1, 1], [3, 2]])).unwrap();
        assert!(g.contains(&x));
        assert!(parse_element(&g, &serde_json::json!([[1, 5]])).is_err());
    }

    #[test]
    fn atoms_and_states() {
        let g = GroupDescriptor::integers();
        let f = parse_atoms(
            &g,
            &[
                vec![serde_json::json!(1), serde_json::json!(0.5)],
                vec![serde_json::json!(-2), serde_json::json!(1), serde_json::json!(-1)],
            ],
        )
        .unwrap();
        assert_eq!(f.len(), 2);
        let spec: StateSpec = serde_json::from_str(
            r#"{"kind":"mixture","parts":[[0.5,{"kind":"trace"}],[0.5,{"kind":"vector","xi":[[0,1],[1,1]]}]]}"#,
        )
        .unwrap();
        assert!(parse_state(&g, &spec).is_ok());
        let bad: StateSpec = serde_json::from_str(r#"{"kind":"mixture","parts":[[0.7,{"kind":"trace"}]]}"#).unwrap();
        assert!(parse_state(&g, &bad).is_err());
        let h = GroupDescriptor::Heisenberg;
        assert!(parse_element(&h, &serde_json::json!([1, 2])).is_err());
    }
}
