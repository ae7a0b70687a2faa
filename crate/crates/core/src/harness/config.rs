use serde::{Deserialize, Serialize};

use crate::eigenbasis::EstimationConfig;
use crate::error::{Error, Result};
use crate::landscape::{build_kronecker_quadratic, from_polar, Landscape, MlpProblem, MlpSpec, QuadraticSpec, SpiralSpec};
use crate::linalg::Matrix;
use crate::optim::{OptimizerConfig, OptimizerKind};
use crate::rng::{SeededRng, Stream};
use crate::staleness::StalenessConfig;

/// Everything a run depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub max_steps: u64,
    #[serde(default)]
    pub loss_threshold: Option<f64>,
    #[serde(default = "default_log_every")]
    pub log_every: u64,
    pub landscape: LandscapeConfig,
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub estimation: Option<EstimationConfig>,
    #[serde(default)]
    pub staleness: StalenessConfig,
}

fn default_log_every() -> u64 {
    1
}

/// Objective plus its starting point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LandscapeConfig {
    /// `½wᵀHw`. Two-dimensional specs rotate by `angle_deg`; others use a
    /// random rotation drawn from `rotation_seed`. `start` is given in
    /// eigen-coordinates.
    Quadratic {
        eigenvalues: Vec<f64>,
        #[serde(default)]
        angle_deg: Option<f64>,
        #[serde(default)]
        rotation_seed: Option<u64>,
        #[serde(default)]
        start: Option<Vec<f64>>,
    },
    /// `H = A ⊗ B` over a `rows x cols` parameter. Factors are either given or
    /// drawn from `factor_seed`; the start is drawn from the run seed unless given.
    KroneckerQuadratic {
        #[serde(default)]
        a: Option<Vec<Vec<f64>>>,
        #[serde(default)]
        b: Option<Vec<Vec<f64>>>,
        #[serde(default)]
        rows: Option<usize>,
        #[serde(default)]
        cols: Option<usize>,
        #[serde(default)]
        factor_seed: u64,
        #[serde(default)]
        start: Option<Vec<Vec<f64>>>,
    },
    Spiral {
        #[serde(default = "d_amplitude")]
        amplitude: f64,
        #[serde(default = "d_frequency")]
        frequency: f64,
        #[serde(default = "d_offset")]
        offset: f64,
        #[serde(default = "d_start_radius")]
        start_radius: f64,
        #[serde(default)]
        start_theta: f64,
    },
    Mlp {
        layer_dims: Vec<usize>,
        #[serde(default)]
        dataset_seed: u64,
        #[serde(default = "d_samples")]
        n_samples: usize,
        #[serde(default = "d_condition")]
        input_condition: f64,
        /// Mini-batch size; full batch when absent.
        #[serde(default)]
        batch_size: Option<usize>,
    },
}

fn d_amplitude() -> f64 {
    SpiralSpec::default().amplitude
}
fn d_frequency() -> f64 {
    SpiralSpec::default().frequency
}
fn d_offset() -> f64 {
    SpiralSpec::default().offset
}
fn d_start_radius() -> f64 {
    35.0
}
fn d_samples() -> usize {
    256
}
fn d_condition() -> f64 {
    1.0
}

/// Default planar start in eigen-coordinates.
pub const QUADRATIC_START: [f64; 2] = [4.0, 12.0];

impl LandscapeConfig {
    /// Builds the objective and the initial parameters for `seed`.
    pub fn build(&self, seed: u64) -> Result<(Landscape, Vec<Matrix>)> {
        match self {
            LandscapeConfig::Quadratic {
                eigenvalues,
                angle_deg,
                rotation_seed,
                start,
            } => {
                let spec = quadratic_spec(eigenvalues, *angle_deg, *rotation_seed)?;
                let z = match start {
                    Some(z) => z.clone(),
                    None if spec.dim() == 2 => QUADRATIC_START.to_vec(),
                    None => {
                        let mut rng = SeededRng::stream(seed, Stream::Init);
                        (0..spec.dim()).map(|_| rng.normal()).collect()
                    }
                };
                if z.len() != spec.dim() {
                    return Err(Error::config("landscape.start", format!("needs {} entries", spec.dim())));
                }
                let w = Matrix::column(&spec.from_eigen_coordinates(&z)?)?;
                Ok((Landscape::Quadratic(spec), vec![w]))
            }
            LandscapeConfig::KroneckerQuadratic {
                a,
                b,
                rows,
                cols,
                factor_seed,
                start,
            } => {
                let (a, b) = kronecker_factors(a, b, *rows, *cols, *factor_seed)?;
                let spec = build_kronecker_quadratic(&a, &b).map_err(|e| Error::config("landscape", e.to_string()))?;
                let (m, n) = spec.param_shape();
                let w = match start {
                    Some(rows) => Matrix::from_rows(rows).map_err(|e| Error::config("landscape.start", e.to_string()))?,
                    None => SeededRng::stream(seed, Stream::Init).normal_matrix(m, n, 1.0),
                };
                if w.shape() != (m, n) {
                    return Err(Error::config("landscape.start", format!("must be {m}x{n}")));
                }
                Ok((Landscape::Quadratic(spec), vec![w]))
            }
            LandscapeConfig::Spiral {
                amplitude,
                frequency,
                offset,
                start_radius,
                start_theta,
            } => {
                let spec = SpiralSpec {
                    amplitude: *amplitude,
                    frequency: *frequency,
                    offset: *offset,
                };
                spec.validate()?;
                if !(*start_radius > crate::landscape::SPIRAL_ORIGIN_CUTOFF) {
                    return Err(Error::config("landscape.start_radius", "must be positive"));
                }
                let w = Matrix::column(&from_polar(*start_radius, *start_theta))?;
                Ok((Landscape::Spiral(spec), vec![w]))
            }
            LandscapeConfig::Mlp {
                layer_dims,
                dataset_seed,
                n_samples,
                input_condition,
                batch_size,
            } => {
                if let Some(bs) = batch_size {
                    if *bs == 0 || bs > n_samples {
                        return Err(Error::config("landscape.batch_size", "must lie in 1..=n_samples"));
                    }
                }
                let spec = MlpSpec {
                    input_condition: *input_condition,
                    ..MlpSpec::new(layer_dims.clone(), *dataset_seed, *n_samples)
                };
                let problem = MlpProblem::new(spec)?;
                let w = problem.init_weights(seed);
                Ok((Landscape::Mlp(problem), w))
            }
        }
    }

    pub fn batch_size(&self) -> Option<usize> {
        match self {
            LandscapeConfig::Mlp { batch_size, .. } => *batch_size,
            _ => None,
        }
    }
}

fn quadratic_spec(eigenvalues: &[f64], angle: Option<f64>, rotation_seed: Option<u64>) -> Result<QuadraticSpec> {
    let to_cfg = |e: Error| match e {
        Error::Config { .. } => e,
        other => Error::config("landscape.eigenvalues", other.to_string()),
    };
    match (angle, rotation_seed) {
        (Some(_), Some(_)) => Err(Error::config("landscape.angle_deg", "conflicts with rotation_seed")),
        (Some(deg), None) => {
            let lam: [f64; 2] = eigenvalues
                .try_into()
                .map_err(|_| Error::config("landscape.angle_deg", "only valid with two eigenvalues"))?;
            QuadraticSpec::planar(lam, deg).map_err(to_cfg)
        }
        (None, seed) => {
            let n = eigenvalues.len();
            if n == 0 {
                return Err(Error::config("landscape.eigenvalues", "must not be empty"));
            }
            let rot = match seed {
                Some(s) => SeededRng::stream(s, Stream::Dataset).orthogonal(n),
                None => Matrix::identity(n),
            };
            QuadraticSpec::new(eigenvalues.to_vec(), rot).map_err(to_cfg)
        }
    }
}

fn kronecker_factors(
    a: &Option<Vec<Vec<f64>>>,
    b: &Option<Vec<Vec<f64>>>,
    rows: Option<usize>,
    cols: Option<usize>,
    seed: u64,
) -> Result<(Matrix, Matrix)> {
    match (a, b) {
        (Some(a), Some(b)) => {
            let a = Matrix::from_rows(a).map_err(|e| Error::config("landscape.a", e.to_string()))?;
            let b = Matrix::from_rows(b).map_err(|e| Error::config("landscape.b", e.to_string()))?;
            Ok((a, b))
        }
        (None, None) => {
            let m = rows.ok_or_else(|| Error::config("landscape.rows", "required without explicit factors"))?;
            let n = cols.ok_or_else(|| Error::config("landscape.cols", "required without explicit factors"))?;
            if m == 0 || n == 0 {
                return Err(Error::config("landscape.rows", "dimensions must be positive"));
            }
            let mut rng = SeededRng::stream(seed, Stream::Dataset);
            let a = random_spd(&mut rng, n);
            let b = random_spd(&mut rng, m);
            Ok((a, b))
        }
        _ => Err(Error::config("landscape.a", "give both factors a and b, or neither")),
    }
}

/// `Q diag(λ) Qᵀ` with `λ` log-uniform in `[0.1, 10]` and Haar-like `Q`.
pub fn random_spd(rng: &mut SeededRng, n: usize) -> Matrix {
    let q = rng.orthogonal(n);
    let lam: Vec<f64> = (0..n).map(|_| 10f64.powf(rng.uniform_range(-1.0, 1.0))).collect();
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            out[(i, j)] = (0..n).map(|k| q[(i, k)] * lam[k] * q[(j, k)]).sum();
        }
    }
    out.symmetrized()
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = parse_toml(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }

    pub fn validate(&self) -> Result<()> {
        if self.log_every == 0 {
            return Err(Error::config("log_every", "must be at least 1"));
        }
        if let Some(t) = self.loss_threshold {
            if !t.is_finite() {
                return Err(Error::config("loss_threshold", "must be finite"));
            }
        }
        self.optimizer.validate()?;
        self.staleness.validate()?;
        if let Some(e) = &self.estimation {
            e.validate()?;
        } else if self.optimizer.name == OptimizerKind::RotatedAdam {
            return Err(Error::config("estimation", "required by rotated_adam"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_vec(self).unwrap_or_default();
        hex::encode(Sha256::digest(&json))
    }
}

/// Deserializes TOML, mapping failures to a config error naming the key.
pub fn parse_toml<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| config_error_in(text, e))
}

/// Converts a TOML error without source context.
pub fn config_error(e: toml::de::Error) -> Error {
    config_error_in("", e)
}

fn config_error_in(text: &str, e: toml::de::Error) -> Error {
    let msg = e.message().to_owned();
    // Field errors quote the key; value errors quote the value, so use the span.
    let names_field = msg.starts_with("unknown field") || msg.starts_with("missing field");
    let at_span = || e.span().and_then(|s| key_at(text, s.start));
    let key = if names_field { backticked(&msg).or_else(at_span) } else { at_span().or_else(|| backticked(&msg)) }
        .unwrap_or_else(|| "<document>".to_owned());
    Error::config(key, msg.trim().to_owned())
}

fn backticked(msg: &str) -> Option<String> {
    let start = msg.find('`')? + 1;
    let len = msg[start..].find('`')?;
    Some(msg[start..start + len].to_owned())
}

/// Dotted key of the assignment containing byte `pos`, prefixed by its table.
fn key_at(text: &str, pos: usize) -> Option<String> {
    let pos = pos.min(text.len());
    let line_start = text[..pos].rfind('\n').map_or(0, |i| i + 1);
    let line = text[line_start..].lines().next().unwrap_or("");
    let key = line.split('=').next()?.trim();
    if key.is_empty() || key.starts_with('[') {
        return None;
    }
    let table = text[..line_start]
        .lines()
        .rev()
        .find_map(|l| {
            let l = l.trim();
            l.starts_with('[').then(|| l.trim_matches(|c| c == '[' || c == ']').to_owned())
        });
    Some(match table {
        Some(t) if !t.is_empty() => format!("{t}.{key}"),
        _ => key.to_owned(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const QUAD: &str = r#"
        seed = 3
        max_steps = 50
        loss_threshold = 15.0
        [landscape]
        kind = "quadratic"
        eigenvalues = [10.0, 1.0]
        angle_deg = 45.0
        [optimizer]
        name = "adam"
        eta = 1.0
        beta1 = 0.0
        beta2 = 0.1
        weight_decay = 0.0
        grad_clip = "none"
        [staleness]
        tau = 2
    "#;

    #[test]
    fn unknown_variant_names_the_key() {
        let bad = QUAD.replace("kind = \"quadratic\"", "kind = \"torus\"");
        match RunConfig::from_toml(&bad) {
            Err(Error::Config { key, reason }) => {
                assert_eq!(key, "landscape.kind");
                assert!(reason.contains("torus"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn parses_and_builds() {
        let cfg = RunConfig::from_toml(QUAD).unwrap();
        assert_eq!(cfg.staleness.tau, 2);
        let (land, w) = cfg.landscape.build(cfg.seed).unwrap();
        assert_eq!(land.param_shapes(), vec![(2, 1)]);
        let loss = land.loss(&w).unwrap();
        assert!((loss - 0.5 * (10.0 * 16.0 + 144.0)).abs() < 1e-9);
    }

    #[test]
    fn unknown_key_is_named() {
        let bad = QUAD.replace("tau = 2", "tua = 2");
        match RunConfig::from_toml(&bad) {
            Err(Error::Config { key, .. }) => assert_eq!(key, "tua"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_value_is_named() {
        let bad = QUAD.replace("eta = 1.0", "eta = -1.0");
        match RunConfig::from_toml(&bad) {
            Err(Error::Config { key, .. }) => assert_eq!(key, "optimizer.eta"),
            other => panic!("unexpected {other:?}"),
        }
        let bad = QUAD.replace("max_steps = 50", "max_steps = \"many\"");
        match RunConfig::from_toml(&bad) {
            Err(Error::Config { key, .. }) => assert_eq!(key, "max_steps"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rotated_needs_estimation() {
        let bad = QUAD.replace("name = \"adam\"", "name = \"rotated_adam\"");
        assert!(matches!(RunConfig::from_toml(&bad), Err(Error::Config { key, .. }) if key == "estimation"));
    }

    #[test]
    fn fingerprint_tracks_content() {
        let a = RunConfig::from_toml(QUAD).unwrap();
        let mut b = a.clone();
        assert_eq!(a.fingerprint(), b.fingerprint());
        b.seed += 1;
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint().len(), 64);
    }

    #[test]
    fn toml_round_trip() {
        let a = RunConfig::from_toml(QUAD).unwrap();
        assert_eq!(RunConfig::from_toml(&a.to_toml()).unwrap(), a);
    }
}
