//! Experiment configuration files.
//!
//! A config is a flat `key = value` file. `preset = <name>` fills every
//! model and stability key from a built-in model (with `delay` setting both
//! `tau` and `delta`); any key given explicitly overrides the preset.

use std::fs;
use std::path::{Path, PathBuf};

use gsdde_core::exprlang::Expr;
use gsdde_core::kv::{KvError, KvFile};
use gsdde_core::model::{GsddeModel, InitialHistory, MODEL_KEYS};
use gsdde_core::registry;
use gsdde_core::stability::{
    AxisRange, CheckGrid, DerivativeSteps, LyapunovSpec, DEFAULT_TOLERANCE,
};
use gsdde_core::sublinear::Functional;

use crate::error::CliError;
use crate::verdict::VerdictThresholds;

const PRESET_KEYS: &[&str] = &["preset", "delay"];
const SIMULATION_KEYS: &[&str] = &["m", "n", "steps", "horizon", "seed"];
const ESTIMATOR_KEYS: &[&str] = &["functional", "p"];
const VERDICT_KEYS: &[&str] = &["window_fraction", "stable_ratio", "unstable_floor"];
const STABILITY_KEYS: &[&str] = &[
    "U", "U1", "Ubar", "H", "beta1", "beta2", "beta3", "beta4", "alpha1", "alpha2", "c1", "c2",
    "c3", "varpi", "q", "moment_p",
];
const GRID_KEYS: &[&str] = &[
    "x_min",
    "x_max",
    "x_step",
    "y_min",
    "y_max",
    "y_step",
    "t_min",
    "t_max",
    "t_step",
    "tolerance",
];
const OUTPUT_KEYS: &[&str] = &["out_dir", "format", "gnuplot", "dump_paths"];

/// Every key a config file may contain.
pub fn known_keys() -> Vec<&'static str> {
    [
        MODEL_KEYS,
        PRESET_KEYS,
        SIMULATION_KEYS,
        ESTIMATOR_KEYS,
        VERDICT_KEYS,
        STABILITY_KEYS,
        GRID_KEYS,
        OUTPUT_KEYS,
    ]
    .concat()
}

/// Default delay of a preset when the config does not set `delay`.
pub const DEFAULT_PRESET_DELAY: f64 = 0.01;

/// Key-value defaults for a built-in model and its Lyapunov data.
pub fn preset_defaults(name: &str, delay: f64) -> Option<Vec<(&'static str, String)>> {
    let (model, history) = registry::preset(name, delay)?;
    let mut kv = vec![
        ("f", model.drift.to_string()),
        ("g", model.qv_coeff.to_string()),
        ("h", model.noise.to_string()),
        ("eta", history.eta.to_string()),
        ("delta", model.delay.delta.to_string()),
        ("tau", model.delay.tau.to_string()),
        ("delta_dot_bound", model.delay.delta_dot_bound.to_string()),
        ("sigma_lower_sq", model.vol.sigma_lower_sq.to_string()),
        ("sigma_upper_sq", model.vol.sigma_upper_sq.to_string()),
    ];
    if let Some(g) = model.growth {
        kv.extend([
            ("K", g.k.to_string()),
            ("q1", g.q1.to_string()),
            ("q2", g.q2.to_string()),
        ]);
    }
    if let Some(spec) = registry::preset_lyapunov(name) {
        kv.extend([
            ("U", spec.u.to_string()),
            ("U1", spec.u1.to_string()),
            ("Ubar", spec.ubar.to_string()),
            ("H", spec.h_dom.to_string()),
            ("beta1", spec.betas[0].to_string()),
            ("beta2", spec.betas[1].to_string()),
            ("beta3", spec.betas[2].to_string()),
            ("beta4", spec.betas[3].to_string()),
            ("alpha1", spec.alpha1.to_string()),
            ("alpha2", spec.alpha2.to_string()),
            ("c1", spec.cs[0].to_string()),
            ("c2", spec.cs[1].to_string()),
            ("c3", spec.cs[2].to_string()),
            ("varpi", spec.varpi.to_string()),
            ("q", spec.q.to_string()),
            ("moment_p", spec.p.to_string()),
        ]);
    }
    Some(kv)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            _ => Err(format!("expected `csv` or `json`, got `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    /// Volatility levels `m`.
    pub levels: usize,
    /// Groups `n`.
    pub samples: usize,
    pub steps: usize,
    pub horizon: f64,
    pub seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            levels: 5,
            samples: 20,
            steps: 20_000,
            horizon: 20.0,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub format: OutputFormat,
    pub gnuplot: bool,
    pub dump_paths: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("."),
            format: OutputFormat::Csv,
            gnuplot: false,
            dump_paths: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Where the configuration came from, for error messages.
    pub origin: String,
    pub preset: Option<String>,
    pub model: GsddeModel,
    pub history: InitialHistory,
    pub simulation: SimulationConfig,
    pub functional: Functional,
    pub verdict: VerdictThresholds,
    pub grid: CheckGrid,
    pub tolerance: f64,
    pub output: OutputConfig,
    /// Merged preset and user entries; stability constants are read from
    /// here on demand so that only the commands needing them fail when
    /// they are absent.
    entries: KvFile,
}

fn non_negative(kv: &KvFile, key: &str, value: f64) -> Result<f64, KvError> {
    if value >= 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(kv.invalid(key, "must be finite and non-negative"))
    }
}

fn positive_usize(kv: &KvFile, key: &str, default: usize) -> Result<usize, KvError> {
    match kv.parsed::<usize>(key)? {
        Some(0) => Err(kv.invalid(key, "must be at least 1")),
        Some(v) => Ok(v),
        None => Ok(default),
    }
}

fn parse_bool(kv: &KvFile, key: &str) -> Result<bool, KvError> {
    Ok(kv.parsed::<bool>(key)?.unwrap_or(false))
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, KvError> {
        Self::from_kv(KvFile::parse(text)?)
    }

    /// Reads and parses a config file; errors carry the file path.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|source| CliError::ReadConfig {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::parse(&text).map_err(|source| CliError::Config {
            path: path.display().to_string(),
            source,
        })?;
        cfg.origin = path.display().to_string();
        Ok(cfg)
    }

    /// Wraps a key error with this config's origin.
    pub fn error(&self, source: KvError) -> CliError {
        CliError::Config {
            path: self.origin.clone(),
            source,
        }
    }

    /// Configuration of a built-in preset with no overrides.
    pub fn preset(name: &str, delay: f64) -> Result<Self, KvError> {
        let mut kv = KvFile::default();
        kv.insert("preset", name.to_string());
        kv.insert("delay", delay.to_string());
        Self::from_kv(kv)
    }

    pub fn from_kv(mut kv: KvFile) -> Result<Self, KvError> {
        kv.check_keys(&known_keys())?;
        let preset = kv.get("preset").map(|e| e.value.clone());
        if let Some(name) = &preset {
            let delay = kv.parsed::<f64>("delay")?.unwrap_or(DEFAULT_PRESET_DELAY);
            let defaults = preset_defaults(name, delay).ok_or_else(|| {
                kv.invalid(
                    "preset",
                    format!(
                        "unknown preset; expected one of {}",
                        registry::PRESETS.join(", ")
                    ),
                )
            })?;
            for (key, value) in defaults {
                if !kv.contains(key) {
                    kv.insert(key, value);
                }
            }
        } else if kv.contains("delay") {
            return Err(kv.invalid("delay", "only meaningful together with `preset`"));
        }
        let (model, history) = GsddeModel::from_kv(&kv)?;

        let defaults = SimulationConfig::default();
        let simulation = SimulationConfig {
            levels: positive_usize(&kv, "m", defaults.levels)?,
            samples: positive_usize(&kv, "n", defaults.samples)?,
            steps: positive_usize(&kv, "steps", defaults.steps)?,
            horizon: match kv.parsed::<f64>("horizon")? {
                Some(h) if h > 0.0 && h.is_finite() => h,
                Some(_) => return Err(kv.invalid("horizon", "must be positive")),
                None => defaults.horizon,
            },
            seed: kv.parsed::<u64>("seed")?.unwrap_or(defaults.seed),
        };

        let p = kv.parsed::<f64>("p")?.unwrap_or(1.0);
        if !(p > 0.0 && p.is_finite()) {
            return Err(kv.invalid("p", "must be positive"));
        }
        let functional = match kv.get("functional").map(|e| e.value.as_str()) {
            None | Some("abs_power") => Functional::AbsPower(p),
            Some(text) => {
                let expr =
                    Expr::parse(text).map_err(|e| kv.invalid("functional", e.to_string()))?;
                Functional::expr(expr).map_err(|e| kv.invalid("functional", e.to_string()))?
            }
        };

        let vd = VerdictThresholds::default();
        let verdict = VerdictThresholds {
            window_fraction: kv.parsed("window_fraction")?.unwrap_or(vd.window_fraction),
            stable_ratio: kv.parsed("stable_ratio")?.unwrap_or(vd.stable_ratio),
            unstable_floor: kv.parsed("unstable_floor")?.unwrap_or(vd.unstable_floor),
        };
        if !(verdict.window_fraction > 0.0 && verdict.window_fraction <= 1.0) {
            return Err(kv.invalid("window_fraction", "must lie in (0, 1]"));
        }
        non_negative(&kv, "stable_ratio", verdict.stable_ratio)?;
        non_negative(&kv, "unstable_floor", verdict.unstable_floor)?;

        let dg = CheckGrid::default();
        let axis = |name: &str, d: AxisRange| -> Result<AxisRange, KvError> {
            let key = |s: &str| format!("{name}_{s}");
            let r = AxisRange {
                min: kv.parsed(&key("min"))?.unwrap_or(d.min),
                max: kv.parsed(&key("max"))?.unwrap_or(d.max),
                step: kv.parsed(&key("step"))?.unwrap_or(d.step),
            };
            AxisRange::new(r.min, r.max, r.step)
                .map_err(|e| kv.invalid(&key("step"), e.to_string()))
        };
        let grid = CheckGrid {
            x: axis("x", dg.x)?,
            y: axis("y", dg.y)?,
            t: axis("t", dg.t)?,
        };
        let tolerance = non_negative(
            &kv,
            "tolerance",
            kv.parsed("tolerance")?.unwrap_or(DEFAULT_TOLERANCE),
        )?;

        let output = OutputConfig {
            dir: kv
                .get("out_dir")
                .map_or_else(|| PathBuf::from("."), |e| PathBuf::from(&e.value)),
            format: kv.parsed("format")?.unwrap_or_default(),
            gnuplot: parse_bool(&kv, "gnuplot")?,
            dump_paths: parse_bool(&kv, "dump_paths")?,
        };

        Ok(ExperimentConfig {
            origin: preset
                .as_ref()
                .map_or_else(|| "<inline>".into(), |p| format!("<preset {p}>")),
            preset,
            model,
            history,
            simulation,
            functional,
            verdict,
            grid,
            tolerance,
            output,
            entries: kv,
        })
    }

    fn require(&self, keys: &[&str]) -> Result<(), KvError> {
        let missing: Vec<String> = keys
            .iter()
            .filter(|k| !self.entries.contains(k))
            .map(|k| k.to_string())
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(KvError::Missing(missing))
        }
    }

    fn number(&self, key: &str) -> Result<f64, KvError> {
        self.entries
            .parsed::<f64>(key)?
            .ok_or_else(|| KvError::Missing(vec![key.to_string()]))
    }

    /// `β₃`, defaulting to the infinite sentinel when `g ≡ 0`.
    fn beta3(&self) -> Result<f64, KvError> {
        match self.entries.parsed::<f64>("beta3")? {
            Some(b) => Ok(b),
            None if self.model.qv_is_zero() => Ok(f64::INFINITY),
            None => Err(KvError::Missing(vec!["beta3".into()])),
        }
    }

    /// `(β₁, β₂, β₃, β₄, ϖ)` for the admissible-delay bound.
    pub fn delay_bound_constants(&self) -> Result<[f64; 5], KvError> {
        self.require(&["beta1", "beta2", "beta4", "varpi"])?;
        Ok([
            self.number("beta1")?,
            self.number("beta2")?,
            self.beta3()?,
            self.number("beta4")?,
            self.number("varpi")?,
        ])
    }

    /// Lyapunov candidates and constants for the assumption checks.
    pub fn lyapunov_spec(&self) -> Result<LyapunovSpec, KvError> {
        self.require(&[
            "U", "U1", "Ubar", "H", "beta1", "beta2", "beta4", "alpha1", "alpha2", "c1", "c2",
            "c3", "varpi", "moment_p",
        ])?;
        let expr = |key: &str| -> Result<Expr, KvError> {
            let e = self.entries.get(key).expect("required above");
            Expr::parse(&e.value).map_err(|err| self.entries.invalid(key, err.to_string()))
        };
        let growth = self
            .model
            .growth
            .ok_or_else(|| KvError::Missing(vec!["K".into(), "q1".into(), "q2".into()]))?;
        let q = match self.entries.parsed::<f64>("q")? {
            Some(q) => q,
            None => LyapunovSpec::auto_q(growth.q1, growth.q2),
        };
        Ok(LyapunovSpec {
            u: expr("U")?,
            u1: expr("U1")?,
            ubar: expr("Ubar")?,
            h_dom: expr("H")?,
            betas: [
                self.number("beta1")?,
                self.number("beta2")?,
                self.beta3()?,
                self.number("beta4")?,
            ],
            alpha1: self.number("alpha1")?,
            alpha2: self.number("alpha2")?,
            cs: [self.number("c1")?, self.number("c2")?, self.number("c3")?],
            varpi: self.number("varpi")?,
            q1: growth.q1,
            q2: growth.q2,
            q,
            p: self.number("moment_p")?,
            steps: DerivativeSteps::default(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_matches_registry() {
        let cfg = ExperimentConfig::preset("example41", 2.0).unwrap();
        assert_eq!(
            (cfg.model.clone(), cfg.history.clone()),
            registry::example41(2.0)
        );
        assert_eq!(cfg.lyapunov_spec().unwrap(), registry::example41_lyapunov());
        let [b1, b2, b3, b4, w] = cfg.delay_bound_constants().unwrap();
        assert_eq!([b1, b2, b4, w], [0.1, 0.05, 1.0, 1.0]);
        assert_eq!(b3, f64::INFINITY);
    }

    #[test]
    fn explicit_keys_override_preset() {
        let cfg =
            ExperimentConfig::parse("preset = example41\nvarpi = 0.5\nm = 3\nseed = 7\n").unwrap();
        assert_eq!(cfg.lyapunov_spec().unwrap().varpi, 0.5);
        assert_eq!(cfg.simulation.levels, 3);
        assert_eq!(cfg.simulation.seed, 7);
        assert_eq!(cfg.model.delay.tau, DEFAULT_PRESET_DELAY);
    }

    #[test]
    fn missing_constants_are_named() {
        let text = "\
f = -x
h = 1
eta = 1
delta = 0
tau = 0.001
delta_dot_bound = 0
sigma_lower_sq = 1
sigma_upper_sq = 1
beta1 = 0.1
beta2 = 0.05
beta4 = 1
";
        let cfg = ExperimentConfig::parse(text).unwrap();
        assert_eq!(
            cfg.delay_bound_constants().unwrap_err(),
            KvError::Missing(vec!["varpi".into()])
        );
    }

    #[test]
    fn rejects_unknown_keys_and_presets() {
        assert!(matches!(
            ExperimentConfig::parse("preset = example41\nbogus = 1\n").unwrap_err(),
            KvError::UnknownKey { line: 2, .. }
        ));
        assert!(matches!(
            ExperimentConfig::parse("preset = nope\n").unwrap_err(),
            KvError::InvalidValue { line: 1, .. }
        ));
        assert!(matches!(
            ExperimentConfig::parse("preset = example41\nm = 0\n").unwrap_err(),
            KvError::InvalidValue { line: 2, .. }
        ));
    }

    #[test]
    fn functional_selection() {
        let cfg = ExperimentConfig::parse("preset = example41\np = 2\n").unwrap();
        assert_eq!(cfg.functional, Functional::AbsPower(2.0));
        let cfg = ExperimentConfig::parse("preset = example41\nfunctional = x^2 + 1\n").unwrap();
        assert!(matches!(cfg.functional, Functional::Expr(_)));
        assert!(ExperimentConfig::parse("preset = example41\nfunctional = t\n").is_err());
    }
}
