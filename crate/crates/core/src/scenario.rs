//! Scenario configuration: the JSON schema, built-in model instances,
//! family generators, and instantiation into a runnable [`Scenario`].

use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::belief::CostFunction;
use crate::dag::{enumerate_dags, CausalDag, EnumerateOptions};
use crate::equilibrium::{Scenario, SolverParams};
use crate::error::{Error, Result};
use crate::prob::{ConditionalFamily, MAX_VARS};

/// Version stamp carried by every config and report.
pub const SCHEMA_VERSION: u32 = 1;

fn default_schema_version() -> u32 {
    SCHEMA_VERSION
}

fn default_epsilon() -> f64 {
    1e-3
}

fn default_delta() -> f64 {
    1e-6
}

/// Conditional families of a scenario: an explicit list of raw row tables
/// and/or a generator. Generators: `"corners"` (all deterministic
/// three-variable families), `"grid:H"` (three-variable families on the
/// step-`H` grid), `"mirror-closure"` (the explicit list united with its
/// action mirrors).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QSetSpec {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub explicit: Vec<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<String>,
}

/// Causal models of a scenario: explicit list and/or enumeration options,
/// minus an optional exclusion list.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DagSetSpec {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub explicit: Vec<CausalDag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enumerate: Option<EnumerateOptions>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub exclude: Vec<CausalDag>,
}

/// One model instance: primitives, narrative universe, and solver settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub n: usize,
    pub mu: f64,
    pub d_star: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    pub cost: CostFunction,
    pub q_set: QSetSpec,
    pub dag_set: DagSetSpec,
    #[serde(default)]
    pub solver: SolverParams,
}

impl ScenarioConfig {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("scenario parse: {e}")))
    }
}

/// The conditional `x_2 = a(1-y)` with independent read-noise `delta` on
/// each literal: `p(x_2=1|a,y) = (a(1-delta) + (1-a)delta) ((1-y)(1-delta) + y delta)`.
/// At `delta = 0` this is the exact corner; for small positive `delta` the
/// doubly-contradicted cell `(a=0, y=1)` carries mass of order `delta^2`,
/// which is the limit under which the foreign-policy example's conditionals
/// are computed.
pub fn product_noise_family(delta: f64) -> Result<ConditionalFamily> {
    if !(0.0..0.5).contains(&delta) {
        return Err(Error::Domain(format!(
            "product-noise delta={delta} outside [0, 0.5)"
        )));
    }
    let lit = |on: bool| if on { 1.0 - delta } else { delta };
    let mut probs = [0.0; 4];
    for a in 0..2u8 {
        for y in 0..2u8 {
            probs[ConditionalFamily::row_index(a, y)] = lit(a == 1) * lit(y == 0);
        }
    }
    ConditionalFamily::from_x2_probs(probs)
}

/// All sixteen deterministic three-variable families.
pub fn corner_families() -> Vec<ConditionalFamily> {
    (0..16u8)
        .map(|bits| {
            ConditionalFamily::from_x2_probs([
                (bits & 1) as f64,
                (bits >> 1 & 1) as f64,
                (bits >> 2 & 1) as f64,
                (bits >> 3 & 1) as f64,
            ])
            .unwrap()
        })
        .collect()
}

/// Three-variable families with each `p(x_2=1|a,y)` on the step-`h` grid.
pub fn grid_families(h: f64) -> Result<Vec<ConditionalFamily>> {
    if !(h > 0.0 && h <= 0.5) {
        return Err(Error::Config(format!("grid step {h} outside (0, 0.5]")));
    }
    let steps = (1.0 / h).round() as usize;
    let count = (steps + 1).pow(4);
    if count > 250_000 {
        return Err(Error::Config(format!(
            "grid step {h} would generate {count} families"
        )));
    }
    let level = |i: usize| (i as f64 * h).clamp(0.0, 1.0);
    let mut out = Vec::with_capacity(count);
    for i0 in 0..=steps {
        for i1 in 0..=steps {
            for i2 in 0..=steps {
                for i3 in 0..=steps {
                    out.push(ConditionalFamily::from_x2_probs([
                        level(i0),
                        level(i1),
                        level(i2),
                        level(i3),
                    ])?);
                }
            }
        }
    }
    Ok(out)
}

fn expand_families(config: &ScenarioConfig) -> Result<Vec<ConditionalFamily>> {
    let spec = &config.q_set;
    let mut families: Vec<ConditionalFamily> = Vec::new();
    for (i, rows) in spec.explicit.iter().enumerate() {
        if rows.len() != 4 {
            return Err(Error::Config(format!(
                "q_set.explicit[{i}]: expected 4 rows, got {}",
                rows.len()
            )));
        }
        let arr: [Vec<f64>; 4] = [
            rows[0].clone(),
            rows[1].clone(),
            rows[2].clone(),
            rows[3].clone(),
        ];
        let fam = ConditionalFamily::new(config.n, arr)
            .map_err(|e| Error::Config(format!("q_set.explicit[{i}]: {e}")))?;
        families.push(fam);
    }
    match spec.generator.as_deref() {
        None => {}
        Some("corners") => {
            if config.n != 3 {
                return Err(Error::Config(
                    "q_set.generator=corners requires n = 3".to_string(),
                ));
            }
            families.extend(corner_families());
        }
        Some("mirror-closure") => {
            if families.is_empty() {
                return Err(Error::Config(
                    "q_set.generator=mirror-closure needs an explicit base list".to_string(),
                ));
            }
            let mirrors: Vec<ConditionalFamily> = families.iter().map(|f| f.mirror()).collect();
            families.extend(mirrors);
        }
        Some(g) if g.starts_with("grid:") => {
            if config.n != 3 {
                return Err(Error::Config(
                    "q_set.generator=grid requires n = 3".to_string(),
                ));
            }
            let h: f64 = g["grid:".len()..]
                .parse()
                .map_err(|_| Error::Config(format!("q_set.generator: bad grid step in {g:?}")))?;
            families.extend(grid_families(h)?);
        }
        Some(g) => {
            return Err(Error::Config(format!(
                "q_set.generator {g:?} unknown; expected corners, grid:H or mirror-closure"
            )));
        }
    }
    families.dedup();
    if families.is_empty() {
        return Err(Error::Config(
            "q_set produced no conditional families".to_string(),
        ));
    }
    // Deterministic (zero-entry) families are regularized toward uniform at
    // weight delta; families that already have full support are kept as
    // given.
    families
        .into_iter()
        .map(|f| {
            if f.is_full_support() {
                Ok(f)
            } else {
                f.perturb_full_support(config.delta)
            }
        })
        .collect()
}

fn expand_dags(config: &ScenarioConfig) -> Result<Vec<CausalDag>> {
    let spec = &config.dag_set;
    let mut dags: Vec<CausalDag> = Vec::new();
    for (i, dag) in spec.explicit.iter().enumerate() {
        let violations = dag.validate(config.n);
        if !violations.is_empty() {
            let list: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
            return Err(Error::Config(format!(
                "dag_set.explicit[{i}]: {}",
                list.join("; ")
            )));
        }
        dags.push(dag.clone());
    }
    if let Some(opts) = &spec.enumerate {
        dags.extend(enumerate_dags(config.n, opts)?);
    }
    dags.sort();
    dags.dedup();
    dags.retain(|d| !spec.exclude.contains(d));
    if dags.is_empty() {
        return Err(Error::Config("dag_set produced no DAGs".to_string()));
    }
    Ok(dags)
}

/// Validate a configuration and expand it into a runnable scenario.
pub fn instantiate(config: &ScenarioConfig) -> Result<Scenario> {
    if config.schema_version != SCHEMA_VERSION {
        return Err(Error::Config(format!(
            "schema_version {} unsupported (expected {SCHEMA_VERSION})",
            config.schema_version
        )));
    }
    if !(2 < config.n && config.n <= MAX_VARS) {
        return Err(Error::Config(format!(
            "n = {} outside 3..={MAX_VARS}",
            config.n
        )));
    }
    for (field, v) in [("mu", config.mu), ("d_star", config.d_star)] {
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::Config(format!("{field} = {v} outside (0,1)")));
        }
    }
    if !(config.epsilon > 0.0 && config.epsilon < 0.5) {
        return Err(Error::Config(format!(
            "epsilon = {} outside (0, 0.5)",
            config.epsilon
        )));
    }
    if !(config.delta > 0.0 && config.delta < 0.1) {
        return Err(Error::Config(format!(
            "delta = {} outside (0, 0.1)",
            config.delta
        )));
    }
    if config.d_star < config.epsilon || config.d_star > 1.0 - config.epsilon {
        return Err(Error::Config(format!(
            "d_star = {} outside the policy interval [{}, {}]",
            config.d_star,
            config.epsilon,
            1.0 - config.epsilon
        )));
    }
    match config.cost {
        CostFunction::Quadratic { k } => {
            if !(k > 0.0) || !k.is_finite() {
                return Err(Error::Config(format!("cost.k = {k} must be positive")));
            }
        }
    }
    let families = expand_families(config)?;
    let dags = expand_dags(config)?;
    Ok(Scenario {
        n: config.n,
        mu: config.mu,
        d_star: config.d_star,
        epsilon: config.epsilon,
        delta: config.delta,
        cost: config.cost,
        families,
        dags,
        params: config.solver,
    })
}

/// Optional parameter overrides for a built-in scenario.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BuiltinOverrides {
    pub k: Option<f64>,
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    pub d_star: Option<f64>,
}

pub fn builtin_names() -> &'static [&'static str] {
    &["claim1", "claim2", "short-narratives", "opportunity"]
}

/// Build one of the shipped model instances.
///
/// - `claim1`: the foreign-policy example — a single family
///   `x_2 ≈ a(1-y)` (product noise) over all three-variable models with an
///   ancestral action.
/// - `claim2`: the same without the collider `1→3←2`.
/// - `short-narratives`: all sixteen corner families over the perfect
///   three-variable models.
/// - `opportunity`: corner families over all three-variable models at a
///   near-flat cost.
pub fn builtin_config(name: &str, overrides: &BuiltinOverrides) -> Result<ScenarioConfig> {
    let enumerate_all = EnumerateOptions {
        max_nodes: 3,
        perfect_only: false,
        action_ancestral: true,
    };
    let enumerate_perfect = EnumerateOptions {
        perfect_only: true,
        ..enumerate_all
    };
    let collider = CausalDag::new(vec![1, 2, 3], vec![(1, 3), (2, 3)]);

    let mut config = match name {
        "claim1" | "claim2" => {
            let delta = overrides.delta.unwrap_or(1e-8);
            let family = product_noise_family(delta)?;
            let rows: Vec<Vec<f64>> = family.rows().to_vec();
            ScenarioConfig {
                schema_version: SCHEMA_VERSION,
                name: Some(name.to_string()),
                n: 3,
                mu: 0.5,
                d_star: 0.5,
                epsilon: overrides.epsilon.unwrap_or(1e-4),
                delta,
                cost: CostFunction::Quadratic {
                    k: overrides.k.unwrap_or(1.0),
                },
                q_set: QSetSpec {
                    explicit: vec![rows],
                    generator: None,
                },
                dag_set: DagSetSpec {
                    explicit: vec![],
                    enumerate: Some(enumerate_all),
                    exclude: if name == "claim2" {
                        vec![collider]
                    } else {
                        vec![]
                    },
                },
                solver: SolverParams::default(),
            }
        }
        "short-narratives" => ScenarioConfig {
            schema_version: SCHEMA_VERSION,
            name: Some(name.to_string()),
            n: 3,
            mu: 0.5,
            d_star: overrides.d_star.unwrap_or(0.5),
            epsilon: overrides.epsilon.unwrap_or(1e-3),
            delta: overrides.delta.unwrap_or(1e-6),
            cost: CostFunction::Quadratic {
                k: overrides.k.unwrap_or(1.0),
            },
            q_set: QSetSpec {
                explicit: vec![],
                generator: Some("corners".to_string()),
            },
            dag_set: DagSetSpec {
                explicit: vec![],
                enumerate: Some(enumerate_perfect),
                exclude: vec![],
            },
            solver: SolverParams::default(),
        },
        "opportunity" => ScenarioConfig {
            schema_version: SCHEMA_VERSION,
            name: Some(name.to_string()),
            n: 3,
            mu: 0.5,
            d_star: overrides.d_star.unwrap_or(0.5),
            epsilon: overrides.epsilon.unwrap_or(1e-3),
            delta: overrides.delta.unwrap_or(1e-6),
            cost: CostFunction::Quadratic {
                k: overrides.k.unwrap_or(0.01),
            },
            q_set: QSetSpec {
                explicit: vec![],
                generator: Some("corners".to_string()),
            },
            dag_set: DagSetSpec {
                explicit: vec![],
                enumerate: Some(enumerate_all),
                exclude: vec![],
            },
            solver: SolverParams::default(),
        },
        other => {
            return Err(Error::Config(format!(
                "unknown builtin {other:?}; available: {}",
                builtin_names().join(", ")
            )));
        }
    };
    if let Some(d_star) = overrides.d_star {
        config.d_star = d_star;
    }
    Ok(config)
}

/// Load a scenario by builtin name or from a JSON file.
pub fn load_scenario(name_or_path: &str) -> Result<ScenarioConfig> {
    if builtin_names().contains(&name_or_path) {
        return builtin_config(name_or_path, &BuiltinOverrides::default());
    }
    let path = Path::new(name_or_path);
    if !path.exists() {
        return Err(Error::Config(format!(
            "{name_or_path:?} is neither a builtin ({}) nor an existing file",
            builtin_names().join(", ")
        )));
    }
    let text = std::fs::read_to_string(path)?;
    ScenarioConfig::from_json(&text)
}

/// Seeded random scenario with a mirror-closed family set over the perfect
/// three-variable models; by construction these satisfy the richness
/// conditions, so equilibria polarize around the ideal policy.
pub fn rich_random_scenario(seed: u64) -> ScenarioConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut explicit = Vec::new();
    for _ in 0..4 {
        let q: Vec<Vec<f64>> = (0..4)
            .map(|_| {
                let p: f64 = rng.gen_range(0.02..0.98);
                vec![1.0 - p, p]
            })
            .collect();
        explicit.push(q);
    }
    ScenarioConfig {
        schema_version: SCHEMA_VERSION,
        name: Some(format!("rich-random-{seed}")),
        n: 3,
        mu: rng.gen_range(0.35..0.65),
        d_star: rng.gen_range(0.42..0.58),
        epsilon: 1e-3,
        delta: 1e-6,
        cost: CostFunction::Quadratic {
            k: rng.gen_range(0.75..1.5),
        },
        q_set: QSetSpec {
            explicit,
            generator: Some("mirror-closure".to_string()),
        },
        dag_set: DagSetSpec {
            explicit: vec![],
            enumerate: Some(EnumerateOptions {
                max_nodes: 3,
                perfect_only: true,
                action_ancestral: true,
            }),
            exclude: vec![],
        },
        solver: SolverParams::default(),
    }
}
