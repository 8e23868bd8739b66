//! Domain model: customer types, server configurations, and scenarios.
//!
//! A configuration is an `I`-vector counting how many customers of each type
//! one server holds. The configuration family is downward closed (any server
//! may lose a customer) and contains every unit vector (every type can be
//! served somewhere). Validation assigns each nonzero configuration a stable
//! index that every downstream module reuses: LP columns, ODE coordinates,
//! and event-log records all speak in these indices.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance for the strict normalization check `|sum_i rho_i - 1| <= tol`.
pub const STRICT_NORMALIZATION_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("configuration dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("set is not downward closed: {config} present but {missing} is not")]
    NotMonotone {
        config: Configuration,
        missing: Configuration,
    },
    #[error("unit vector for type {0} missing: type {0} cannot be served")]
    MissingUnitVector(usize),
    #[error("zero configuration listed in a nonzero configuration set")]
    ZeroInNonzeroSet,
    #[error("generator set is empty")]
    EmptyGenerators,
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error("scenario i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("scenario parse: {0}")]
    Parse(#[from] serde_json::Error),
}

/// A server configuration: per-type customer counts.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Configuration(pub Vec<u32>);

impl Configuration {
    pub fn zero(dim: usize) -> Self {
        Configuration(vec![0; dim])
    }

    pub fn unit(dim: usize, ctype: usize) -> Self {
        let mut c = vec![0; dim];
        c[ctype] = 1;
        Configuration(c)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Total number of customers packed in this configuration.
    pub fn total(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&k| k == 0)
    }

    /// Componentwise `self <= other`.
    pub fn dominated_by(&self, other: &Configuration) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }

    /// `self - e_i`, or `None` when component `i` is already zero.
    pub fn minus_unit(&self, ctype: usize) -> Option<Configuration> {
        if self.0[ctype] == 0 {
            return None;
        }
        let mut c = self.0.clone();
        c[ctype] -= 1;
        Some(Configuration(c))
    }

    /// `self + e_i`.
    pub fn plus_unit(&self, ctype: usize) -> Configuration {
        let mut c = self.0.clone();
        c[ctype] += 1;
        Configuration(c)
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (pos, k) in self.0.iter().enumerate() {
            if pos > 0 {
                write!(f, ",")?;
            }
            write!(f, "{k}")?;
        }
        write!(f, ")")
    }
}

/// A transition pair: servers move between `config` and `config - e_ctype`
/// as customers of type `ctype` arrive or depart.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    /// Index of the larger configuration (in the stable nonzero ordering).
    pub config: usize,
    pub ctype: usize,
    /// Index of `config - e_ctype`, or `None` when that is the empty configuration.
    pub child: Option<usize>,
}

/// Validated monotone configuration family with derived structure.
///
/// Nonzero configurations are sorted lexicographically; their position is the
/// stable index used everywhere downstream. The zero configuration is a member
/// of the family but carries no index.
#[derive(Debug, Clone)]
pub struct ConfigurationSet {
    dim: usize,
    nonzero: Vec<Configuration>,
    index: BTreeMap<Configuration, usize>,
    edges: Vec<Edge>,
    /// Per type `i`: pairs `(k, k + e_i)` of indices over configurations that
    /// can accept one more type-`i` customer and stay in the family.
    acceptors: Vec<Vec<(usize, usize)>>,
    /// Dense map `[k][i] -> index of k + e_i` when that stays in the family.
    accept_table: Vec<Vec<Option<usize>>>,
    /// Dense map `[k][i] -> index of k - e_i`; `Some(None)` is the empty
    /// configuration, outer `None` means `k_i = 0`.
    child_table: Vec<Vec<Option<Option<usize>>>>,
    unit_index: Vec<usize>,
    kappa: u32,
}

/// Downward closure of `generators`, plus the zero configuration.
pub fn close_monotone(
    generators: &[Configuration],
) -> Result<BTreeSet<Configuration>, ModelError> {
    let Some(first) = generators.first() else {
        return Err(ModelError::EmptyGenerators);
    };
    let dim = first.dim();
    for g in generators {
        if g.dim() != dim {
            return Err(ModelError::DimensionMismatch {
                expected: dim,
                got: g.dim(),
            });
        }
    }
    let mut closed: BTreeSet<Configuration> = BTreeSet::new();
    let mut frontier: Vec<Configuration> = generators.to_vec();
    while let Some(cfg) = frontier.pop() {
        if !closed.insert(cfg.clone()) {
            continue;
        }
        for i in 0..dim {
            if let Some(smaller) = cfg.minus_unit(i) {
                if !closed.contains(&smaller) {
                    frontier.push(smaller);
                }
            }
        }
    }
    closed.insert(Configuration::zero(dim));
    Ok(closed)
}

impl ConfigurationSet {
    /// Validate a full family (zero configuration optional in the input) and
    /// derive indices, edges, acceptors, and kappa.
    pub fn validate<It>(configs: It, dim: usize) -> Result<Self, ModelError>
    where
        It: IntoIterator<Item = Configuration>,
    {
        let mut all: BTreeSet<Configuration> = BTreeSet::new();
        for cfg in configs {
            if cfg.dim() != dim {
                return Err(ModelError::DimensionMismatch {
                    expected: dim,
                    got: cfg.dim(),
                });
            }
            all.insert(cfg);
        }
        all.insert(Configuration::zero(dim));

        // Downward closure: checking one step down suffices by induction.
        for cfg in &all {
            for i in 0..dim {
                if let Some(smaller) = cfg.minus_unit(i) {
                    if !all.contains(&smaller) {
                        return Err(ModelError::NotMonotone {
                            config: cfg.clone(),
                            missing: smaller,
                        });
                    }
                }
            }
        }
        for i in 0..dim {
            if !all.contains(&Configuration::unit(dim, i)) {
                return Err(ModelError::MissingUnitVector(i));
            }
        }

        let nonzero: Vec<Configuration> = all.iter().filter(|c| !c.is_zero()).cloned().collect();
        let index: BTreeMap<Configuration, usize> = nonzero
            .iter()
            .enumerate()
            .map(|(pos, c)| (c.clone(), pos))
            .collect();

        let mut edges = Vec::new();
        let mut child_table = vec![vec![None; dim]; nonzero.len()];
        for (pos, cfg) in nonzero.iter().enumerate() {
            for i in 0..dim {
                if let Some(smaller) = cfg.minus_unit(i) {
                    let child = if smaller.is_zero() {
                        None
                    } else {
                        Some(index[&smaller])
                    };
                    child_table[pos][i] = Some(child);
                    edges.push(Edge {
                        config: pos,
                        ctype: i,
                        child,
                    });
                }
            }
        }

        let mut acceptors = vec![Vec::new(); dim];
        let mut accept_table = vec![vec![None; dim]; nonzero.len()];
        for (pos, cfg) in nonzero.iter().enumerate() {
            for (i, acc) in acceptors.iter_mut().enumerate() {
                let bigger = cfg.plus_unit(i);
                if let Some(&target) = index.get(&bigger) {
                    accept_table[pos][i] = Some(target);
                    acc.push((pos, target));
                }
            }
        }

        let unit_index = (0..dim)
            .map(|i| index[&Configuration::unit(dim, i)])
            .collect();
        let kappa = 1 + nonzero.iter().map(Configuration::total).max().unwrap_or(0);

        Ok(ConfigurationSet {
            dim,
            nonzero,
            index,
            edges,
            acceptors,
            accept_table,
            child_table,
            unit_index,
            kappa,
        })
    }

    /// Validate an explicitly nonzero family (zero configuration rejected).
    pub fn from_nonzero<It>(configs: It, dim: usize) -> Result<Self, ModelError>
    where
        It: IntoIterator<Item = Configuration>,
    {
        let configs: Vec<Configuration> = configs.into_iter().collect();
        if configs.iter().any(Configuration::is_zero) {
            return Err(ModelError::ZeroInNonzeroSet);
        }
        Self::validate(configs, dim)
    }

    /// Downward closure of the generators, validated.
    pub fn from_generators(generators: &[Configuration]) -> Result<Self, ModelError> {
        let closed = close_monotone(generators)?;
        let dim = generators[0].dim();
        Self::validate(closed, dim)
    }

    /// Number of customer types `I`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Nonzero configurations in stable index order.
    pub fn nonzero(&self) -> &[Configuration] {
        &self.nonzero
    }

    pub fn len(&self) -> usize {
        self.nonzero.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nonzero.is_empty()
    }

    pub fn config(&self, idx: usize) -> &Configuration {
        &self.nonzero[idx]
    }

    pub fn index_of(&self, cfg: &Configuration) -> Option<usize> {
        self.index.get(cfg).copied()
    }

    /// All edges, sorted by (config index, type).
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// `(k, k + e_i)` index pairs of configurations that can accept type `i`.
    pub fn acceptors(&self, ctype: usize) -> &[(usize, usize)] {
        &self.acceptors[ctype]
    }

    /// Index of `k + e_i` when that configuration is in the family.
    pub fn accept_target(&self, config: usize, ctype: usize) -> Option<usize> {
        self.accept_table[config][ctype]
    }

    /// Index of `k - e_i`: `Some(None)` is the empty configuration, outer
    /// `None` means the edge does not exist (`k_i = 0`).
    pub fn departure_child(&self, config: usize, ctype: usize) -> Option<Option<usize>> {
        self.child_table[config][ctype]
    }

    /// Index of the unit configuration `e_i`.
    pub fn unit_index(&self, ctype: usize) -> usize {
        self.unit_index[ctype]
    }

    /// `kappa = 1 + max_k sum_i k_i`, one more than the largest packed count.
    pub fn kappa(&self) -> u32 {
        self.kappa
    }
}

/// One customer class: arrival-rate density and service rate.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CustomerType {
    pub lambda: f64,
    pub mu: f64,
}

impl CustomerType {
    /// Offered load `rho = lambda / mu`; always derived, never stored.
    pub fn rho(&self) -> f64 {
        self.lambda / self.mu
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Require `sum_i rho_i = 1` up to [`STRICT_NORMALIZATION_TOL`].
    Strict,
    /// Rescale `r <- r * sum rho` and `lambda_i <- lambda_i / sum rho`,
    /// leaving every absolute arrival rate `lambda_i * r` unchanged.
    #[default]
    Rescale,
}

/// On-disk scenario description.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub types: Vec<CustomerType>,
    pub config_generators: Vec<Vec<u32>>,
    pub r: f64,
    #[serde(default)]
    pub normalization: Normalization,
}

/// A validated, normalized scenario: `sum_i rho_i = 1` holds on exit.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub types: Vec<CustomerType>,
    pub configs: ConfigurationSet,
    pub r: f64,
}

impl Scenario {
    pub fn new(
        types: Vec<CustomerType>,
        configs: ConfigurationSet,
        r: f64,
        normalization: Normalization,
    ) -> Result<Self, ModelError> {
        if types.is_empty() {
            return Err(ModelError::Scenario("no customer types".into()));
        }
        if types.len() != configs.dim() {
            return Err(ModelError::DimensionMismatch {
                expected: types.len(),
                got: configs.dim(),
            });
        }
        for (i, t) in types.iter().enumerate() {
            if !(t.lambda > 0.0) || !(t.mu > 0.0) {
                return Err(ModelError::Scenario(format!(
                    "type {i}: lambda and mu must be positive (lambda={}, mu={})",
                    t.lambda, t.mu
                )));
            }
        }
        if !(r > 0.0) {
            return Err(ModelError::Scenario(format!("r must be positive, got {r}")));
        }

        let rho_sum: f64 = types.iter().map(CustomerType::rho).sum();
        let (types, r) = match normalization {
            Normalization::Strict => {
                if (rho_sum - 1.0).abs() > STRICT_NORMALIZATION_TOL {
                    return Err(ModelError::Scenario(format!(
                        "strict normalization: sum rho = {rho_sum} differs from 1"
                    )));
                }
                (types, r)
            }
            Normalization::Rescale => {
                let scaled = types
                    .iter()
                    .map(|t| CustomerType {
                        lambda: t.lambda / rho_sum,
                        mu: t.mu,
                    })
                    .collect();
                (scaled, r * rho_sum)
            }
        };
        Ok(Scenario { types, configs, r })
    }

    pub fn from_file(path: &str) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let file: ScenarioFile = serde_json::from_str(text)?;
        let generators: Vec<Configuration> = file
            .config_generators
            .iter()
            .map(|g| Configuration(g.clone()))
            .collect();
        let configs = ConfigurationSet::from_generators(&generators)?;
        Self::new(file.types, configs, file.r, file.normalization)
    }

    /// Same scenario at a different (post-normalization) scale parameter.
    pub fn with_r(&self, r: f64) -> Scenario {
        Scenario {
            types: self.types.clone(),
            configs: self.configs.clone(),
            r,
        }
    }

    pub fn rho(&self) -> Vec<f64> {
        self.types.iter().map(CustomerType::rho).collect()
    }

    pub fn min_mu(&self) -> f64 {
        self.types.iter().map(|t| t.mu).fold(f64::INFINITY, f64::min)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(counts: &[u32]) -> Configuration {
        Configuration(counts.to_vec())
    }

    #[test]
    fn closure_of_single_slot() {
        let closed = close_monotone(&[cfg(&[1])]).unwrap();
        let expect: BTreeSet<_> = [cfg(&[0]), cfg(&[1])].into_iter().collect();
        assert_eq!(closed, expect);
    }

    #[test]
    fn closure_componentwise() {
        let closed = close_monotone(&[cfg(&[2, 0]), cfg(&[0, 1])]).unwrap();
        let expect: BTreeSet<_> = [cfg(&[0, 0]), cfg(&[1, 0]), cfg(&[2, 0]), cfg(&[0, 1])]
            .into_iter()
            .collect();
        assert_eq!(closed, expect);
    }

    #[test]
    fn closure_of_capacity_two() {
        let closed = close_monotone(&[cfg(&[2])]).unwrap();
        let expect: BTreeSet<_> = [cfg(&[0]), cfg(&[1]), cfg(&[2])].into_iter().collect();
        assert_eq!(closed, expect);
    }

    #[test]
    fn closure_is_idempotent() {
        let gens = [cfg(&[2, 1]), cfg(&[0, 2])];
        let once = close_monotone(&gens).unwrap();
        let as_vec: Vec<_> = once.iter().cloned().collect();
        let twice = close_monotone(&as_vec).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn closure_rejects_dimension_mismatch() {
        let err = close_monotone(&[cfg(&[1, 0]), cfg(&[1])]).unwrap_err();
        assert!(matches!(err, ModelError::DimensionMismatch { .. }));
    }

    #[test]
    fn validate_capacity_two() {
        let set =
            ConfigurationSet::validate([cfg(&[0]), cfg(&[1]), cfg(&[2])], 1).unwrap();
        assert_eq!(set.kappa(), 3);
        assert_eq!(set.len(), 2);
        // Edges ((1),1) and ((2),1) in stable order.
        assert_eq!(set.edges().len(), 2);
        assert_eq!(set.edges()[0].config, set.index_of(&cfg(&[1])).unwrap());
        assert_eq!(set.edges()[0].child, None);
        assert_eq!(
            set.edges()[1].child,
            Some(set.index_of(&cfg(&[1])).unwrap())
        );
    }

    #[test]
    fn validate_detects_hole_with_witness() {
        let err = ConfigurationSet::validate([cfg(&[0]), cfg(&[2])], 1).unwrap_err();
        match err {
            ModelError::NotMonotone { config, missing } => {
                assert_eq!(config, cfg(&[2]));
                assert_eq!(missing, cfg(&[1]));
            }
            other => panic!("expected NotMonotone, got {other:?}"),
        }
    }

    #[test]
    fn validate_two_type_set() {
        let set = ConfigurationSet::validate(
            [cfg(&[0, 0]), cfg(&[1, 0]), cfg(&[2, 0]), cfg(&[0, 1])],
            2,
        )
        .unwrap();
        assert_eq!(set.kappa(), 3);
    }

    #[test]
    fn validate_requires_unit_vectors() {
        // Family over two types that never serves type 1.
        let err =
            ConfigurationSet::validate([cfg(&[0, 0]), cfg(&[1, 0])], 2).unwrap_err();
        assert!(matches!(err, ModelError::MissingUnitVector(1)));
    }

    #[test]
    fn from_nonzero_rejects_zero() {
        let err = ConfigurationSet::from_nonzero([cfg(&[0]), cfg(&[1])], 1).unwrap_err();
        assert!(matches!(err, ModelError::ZeroInNonzeroSet));
    }

    #[test]
    fn kappa_examples() {
        let k1 = ConfigurationSet::from_generators(&[cfg(&[1])]).unwrap();
        assert_eq!(k1.kappa(), 2);
        let k2 = ConfigurationSet::from_generators(&[cfg(&[2])]).unwrap();
        assert_eq!(k2.kappa(), 3);
        let k3 = ConfigurationSet::from_generators(&[cfg(&[2, 1])]).unwrap();
        assert_eq!(k3.kappa(), 4);
    }

    #[test]
    fn kappa_of_single_generator_closure() {
        for gen in [cfg(&[3]), cfg(&[1, 2]), cfg(&[2, 2, 1])] {
            let total = gen.total();
            let set = ConfigurationSet::from_generators(&[gen]).unwrap();
            assert_eq!(set.kappa(), 1 + total);
        }
    }

    #[test]
    fn acceptors_and_units_consistent() {
        let set = ConfigurationSet::from_generators(&[cfg(&[2, 0]), cfg(&[0, 1])]).unwrap();
        // Type 0 can be added to (1,0) only; type 1 to nothing occupied.
        let acc0 = set.acceptors(0);
        assert_eq!(acc0.len(), 1);
        assert_eq!(set.config(acc0[0].0), &cfg(&[1, 0]));
        assert_eq!(set.config(acc0[0].1), &cfg(&[2, 0]));
        assert!(set.acceptors(1).is_empty());
        assert_eq!(set.config(set.unit_index(1)), &cfg(&[0, 1]));
    }

    #[test]
    fn scenario_rescale_preserves_absolute_rates() {
        let json = r#"{
            "types": [{"lambda": 0.6, "mu": 1.0}, {"lambda": 0.9, "mu": 1.0}],
            "config_generators": [[2, 0], [0, 1]],
            "r": 100.0,
            "normalization": "rescale"
        }"#;
        let scn = Scenario::from_json(json).unwrap();
        let rho_sum: f64 = scn.rho().iter().sum();
        assert!((rho_sum - 1.0).abs() < 1e-14);
        // lambda_i * r is invariant under rescale.
        assert!((scn.types[0].lambda * scn.r - 60.0).abs() < 1e-9);
        assert!((scn.types[1].lambda * scn.r - 90.0).abs() < 1e-9);
        assert!((scn.r - 150.0).abs() < 1e-9);
    }

    #[test]
    fn scenario_strict_rejects_unnormalized() {
        let json = r#"{
            "types": [{"lambda": 0.6, "mu": 1.0}],
            "config_generators": [[1]],
            "r": 10.0,
            "normalization": "strict"
        }"#;
        assert!(Scenario::from_json(json).is_err());
    }

    #[test]
    fn scenario_defaults_to_rescale() {
        let json = r#"{
            "types": [{"lambda": 2.0, "mu": 1.0}],
            "config_generators": [[1]],
            "r": 10.0
        }"#;
        let scn = Scenario::from_json(json).unwrap();
        assert!((scn.r - 20.0).abs() < 1e-12);
    }
}
