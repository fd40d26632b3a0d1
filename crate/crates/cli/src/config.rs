//! Experiment configuration: a single JSON document, parsed with serde and
//! then checked against the core types.

use jscc_core::achievability::{AchievabilityConfig, AuxSearch, Initializer, InnerLaw};
use jscc_core::converse::{ConverseConfig, EncoderSearch, TiltedVariant};
use jscc_core::distortion::{hamming, RelaxationFunction, RelaxationTable};
use jscc_core::product::{product_channel, product_distortion, product_source};
use jscc_core::sim::{Scheme, SimMode};
use jscc_core::{DistortionSpec, JointPmf, Kernel, Matrix, Pmf, SourceModel, StructuredChannel};
use serde::Deserialize;

use crate::CliError;

type Table = Vec<Vec<f64>>;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub source: SourceConfig,
    pub channel: ChannelConfig,
    #[serde(default)]
    pub distortion: DistortionConfig,
    pub thresholds: Thresholds,
    #[serde(default = "default_relaxations")]
    pub relaxations: Vec<RelaxationConfig>,
    #[serde(default)]
    pub converse: ConverseSection,
    #[serde(default)]
    pub achievability: Option<AchievabilitySection>,
    #[serde(default)]
    pub simulation: Option<SimulationSection>,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "one")]
    pub product_blocklength: usize,
}

fn one() -> usize {
    1
}

fn default_relaxations() -> Vec<RelaxationConfig> {
    vec![RelaxationConfig::MaxNormalized]
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum SourceConfig {
    Joint { joint: Table },
    Parts { p_s: Vec<f64>, p_x_given_s: Table },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    /// Rows indexed by `y1 * |Y2| + y2`.
    pub kernel: Table,
    pub first: usize,
    pub second: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum MatrixOrHamming {
    Named(String),
    Table(Table),
}

impl Default for MatrixOrHamming {
    fn default() -> Self {
        Self::Named("hamming".into())
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistortionConfig {
    #[serde(default)]
    pub d_s: MatrixOrHamming,
    #[serde(default)]
    pub d_x: MatrixOrHamming,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

impl OneOrMany {
    fn values(&self) -> Vec<f64> {
        match self {
            Self::One(v) => vec![*v],
            Self::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    #[serde(rename = "D_s")]
    pub d_s: OneOrMany,
    #[serde(rename = "D_x")]
    pub d_x: OneOrMany,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelaxationConfig {
    Linear { a: f64, b: f64 },
    MaxNormalized,
    Table { s_levels: Vec<f64>, x_levels: Vec<f64>, values: Table },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchConfig {
    ExhaustiveDeterministic,
    SimplexGrid { resolution: usize },
    CoordinateDescent { restarts: usize },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantConfig {
    FixedLevel,
    /// Rows indexed by channel output, columns by `ŝ * |X̂| + x̂`.
    Generalized { decoder: Table },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConverseSection {
    #[serde(default = "default_search")]
    pub search: SearchConfig,
    #[serde(default = "default_variant")]
    pub variant: VariantConfig,
    #[serde(default)]
    pub reference_outputs: Vec<Vec<f64>>,
    #[serde(default = "yes")]
    pub default_references: bool,
    #[serde(default = "yes")]
    pub certify: bool,
    #[serde(default = "yes")]
    pub polish: bool,
}

impl Default for ConverseSection {
    fn default() -> Self {
        Self {
            search: default_search(),
            variant: default_variant(),
            reference_outputs: Vec::new(),
            default_references: true,
            certify: true,
            polish: true,
        }
    }
}

fn default_search() -> SearchConfig {
    SearchConfig::ExhaustiveDeterministic
}

fn default_variant() -> VariantConfig {
    VariantConfig::FixedLevel
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuxConfig {
    CoordinateDescent { restarts: usize, resolution: usize },
    Fixed { p12: Table, p_hat: Table },
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitializerConfig {
    Uniform,
    RdSeeded,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerLawConfig {
    Conditional,
    Marginal,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AchievabilitySection {
    #[serde(rename = "M")]
    pub m: u64,
    #[serde(default)]
    pub factorizations: Option<Vec<(u64, u64)>>,
    #[serde(default)]
    pub search: Option<AuxConfig>,
    #[serde(default)]
    pub initializer: Option<InitializerConfig>,
    #[serde(default)]
    pub inner_law: Option<InnerLawConfig>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeConfig {
    FixedCodebook,
    Ensemble,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeConfig {
    #[serde(rename = "M1")]
    pub m1: usize,
    #[serde(rename = "M2")]
    pub m2: usize,
    pub p_hat: Table,
    pub p12: Table,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub trials: u64,
    pub mode: ModeConfig,
    #[serde(default = "default_per_codebook")]
    pub trials_per_codebook: u64,
    /// Codebook parameters; the achievability witness at each grid point
    /// when absent.
    #[serde(default)]
    pub scheme: Option<SchemeConfig>,
}

fn default_per_codebook() -> u64 {
    100
}

/// Parses the JSON text; syntax and schema errors carry line and column.
pub fn parse(text: &str) -> Result<ExperimentConfig, CliError> {
    serde_json::from_str(text).map_err(|e| {
        CliError::Config(format!("{} at line {} column {}", strip_position(&e.to_string()), e.line(), e.column()))
    })
}

fn strip_position(msg: &str) -> &str {
    msg.find(" at line ").map_or(msg, |i| &msg[..i])
}

fn config_err(what: &str) -> impl Fn(jscc_core::Error) -> CliError + '_ {
    move |e| CliError::Config(format!("{what}: {e}"))
}

/// Validated model, expanded to the configured blocklength.
#[derive(Debug, Clone)]
pub struct Problem {
    pub source: SourceModel<f64>,
    pub channel: StructuredChannel<f64>,
    /// Distortion matrices with the first grid point's thresholds.
    pub distortion: DistortionSpec<f64>,
    pub grid: Vec<(f64, f64)>,
    pub relaxations: Vec<RelaxationFunction<f64>>,
    pub converse: ConverseConfig<f64>,
    pub achievability: Option<AchievabilityConfig<f64>>,
    pub simulation: Option<Simulation>,
    pub master_seed: u64,
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub trials: u64,
    pub mode: SimMode,
    pub scheme: Option<Scheme<f64>>,
}

fn distortion_matrix(m: &MatrixOrHamming, rows: usize, what: &str) -> Result<Matrix<f64>, CliError> {
    match m {
        MatrixOrHamming::Named(name) if name == "hamming" => Ok(hamming(rows, rows)),
        MatrixOrHamming::Named(name) => Err(CliError::Config(format!("{what}: unknown distortion \"{name}\""))),
        MatrixOrHamming::Table(t) => Matrix::from_rows(t.clone()).map_err(config_err(what)),
    }
}

fn relaxation(r: &RelaxationConfig) -> Result<RelaxationFunction<f64>, CliError> {
    match r {
        RelaxationConfig::Linear { a, b } => RelaxationFunction::linear(*a, *b).map_err(config_err("relaxation")),
        RelaxationConfig::MaxNormalized => Ok(RelaxationFunction::MaxNormalized),
        RelaxationConfig::Table { s_levels, x_levels, values } => {
            let values = Matrix::from_rows(values.clone()).map_err(config_err("relaxation table"))?;
            RelaxationTable::new(s_levels.clone(), x_levels.clone(), values)
                .map(RelaxationFunction::Table)
                .map_err(config_err("relaxation table"))
        }
    }
}

fn joint(t: &Table, what: &str) -> Result<JointPmf<f64>, CliError> {
    JointPmf::new(t.clone()).map_err(config_err(what))
}

impl ExperimentConfig {
    /// Checks dimensions and builds the core objects. `seed` overrides
    /// `master_seed`.
    pub fn build(&self, seed: Option<u64>) -> Result<Problem, CliError> {
        let master_seed = seed.unwrap_or(self.master_seed);
        let n = self.product_blocklength;
        if n == 0 {
            return Err(CliError::Config("product_blocklength must be at least 1".into()));
        }
        let source = match &self.source {
            SourceConfig::Joint { joint: t } => SourceModel::from_joint(joint(t, "source")?),
            SourceConfig::Parts { p_s, p_x_given_s } => {
                let p_s = Pmf::new(p_s.clone()).map_err(config_err("source p_s"))?;
                let k = Kernel::new(p_x_given_s.clone()).map_err(config_err("source p_x_given_s"))?;
                SourceModel::from_parts(&p_s, &k).map_err(config_err("source"))?
            }
        };
        let kernel = Kernel::new(self.channel.kernel.clone()).map_err(config_err("channel"))?;
        let channel =
            StructuredChannel::new(kernel, self.channel.first, self.channel.second).map_err(config_err("channel"))?;
        let d_s = distortion_matrix(&self.distortion.d_s, source.states(), "distortion d_s")?;
        let d_x = distortion_matrix(&self.distortion.d_x, source.observations(), "distortion d_x")?;
        if d_s.rows() != source.states() {
            return Err(CliError::Config(format!("distortion d_s has {} rows, source has {} states", d_s.rows(), source.states())));
        }
        if d_x.rows() != source.observations() {
            return Err(CliError::Config(format!(
                "distortion d_x has {} rows, source has {} observations",
                d_x.rows(),
                source.observations()
            )));
        }

        let grid: Vec<(f64, f64)> = self
            .thresholds
            .d_s
            .values()
            .into_iter()
            .flat_map(|s| self.thresholds.d_x.values().into_iter().map(move |x| (s, x)))
            .collect();
        if grid.is_empty() {
            return Err(CliError::Config("threshold grid is empty".into()));
        }
        if let Some(&(s, x)) = grid.iter().find(|(s, x)| !(s.is_finite() && x.is_finite() && *s >= 0.0 && *x >= 0.0)) {
            return Err(CliError::Config(format!("thresholds must be finite and nonnegative, got ({s}, {x})")));
        }
        let base = DistortionSpec::new(d_s, d_x, grid[0].0, grid[0].1).map_err(config_err("distortion"))?;

        let (source, channel, distortion) = if n == 1 {
            (source, channel, base)
        } else {
            (
                product_source(&source, n).map_err(config_err("product source"))?,
                product_channel(&channel, n).map_err(config_err("product channel"))?,
                product_distortion(&base, n).map_err(config_err("product distortion"))?,
            )
        };
        for &(s, x) in &grid {
            distortion.with_thresholds(s, x).map_err(config_err("thresholds"))?;
        }

        if self.relaxations.is_empty() {
            return Err(CliError::Config("relaxations list is empty".into()));
        }
        let relaxations = self.relaxations.iter().map(relaxation).collect::<Result<Vec<_>, _>>()?;
        let converse = self.converse_config(&relaxations, &channel, &distortion, master_seed)?;
        let achievability = self.achievability.as_ref().map(|a| a.build(master_seed)).transpose()?;
        let simulation = self.simulation.as_ref().map(|s| s.build()).transpose()?;
        if let Some(sim) = &simulation {
            if sim.scheme.is_none() && achievability.is_none() {
                return Err(CliError::Config("simulation without a scheme needs an achievability section".into()));
            }
        }
        Ok(Problem { source, channel, distortion, grid, relaxations, converse, achievability, simulation, master_seed })
    }

    fn converse_config(
        &self,
        relaxations: &[RelaxationFunction<f64>],
        channel: &StructuredChannel<f64>,
        distortion: &DistortionSpec<f64>,
        seed: u64,
    ) -> Result<ConverseConfig<f64>, CliError> {
        let c = &self.converse;
        let mut cfg = ConverseConfig::new(relaxations.to_vec());
        cfg.search = match c.search {
            SearchConfig::ExhaustiveDeterministic => EncoderSearch::ExhaustiveDeterministic,
            SearchConfig::SimplexGrid { resolution } => EncoderSearch::SimplexGrid { resolution },
            SearchConfig::CoordinateDescent { restarts } => EncoderSearch::CoordinateDescent { restarts },
        };
        cfg.variant = match &c.variant {
            VariantConfig::FixedLevel => TiltedVariant::FixedLevel,
            VariantConfig::Generalized { decoder } => {
                let decoder = Kernel::new(decoder.clone()).map_err(config_err("converse decoder"))?;
                let reps = distortion.state_reproductions() * distortion.observation_reproductions();
                if decoder.inputs() != channel.outputs() || decoder.outputs() != reps {
                    return Err(CliError::Config(format!(
                        "converse decoder must be {} x {}, got {} x {}",
                        channel.outputs(),
                        reps,
                        decoder.inputs(),
                        decoder.outputs()
                    )));
                }
                TiltedVariant::Generalized { decoder }
            }
        };
        cfg.reference_outputs = c
            .reference_outputs
            .iter()
            .map(|r| Pmf::new(r.clone()).map_err(config_err("reference output")))
            .collect::<Result<_, _>>()?;
        cfg.default_references = c.default_references;
        cfg.certify = c.certify;
        cfg.polish = c.polish;
        cfg.seed = seed;
        cfg.validate().map_err(config_err("converse"))?;
        Ok(cfg)
    }
}

impl AchievabilitySection {
    fn build(&self, seed: u64) -> Result<AchievabilityConfig<f64>, CliError> {
        let mut cfg = AchievabilityConfig::new(self.m);
        cfg.factorizations = self.factorizations.clone();
        cfg.seed = seed;
        if let Some(search) = &self.search {
            cfg.aux_search = match search {
                AuxConfig::CoordinateDescent { restarts, resolution } => {
                    AuxSearch::CoordinateDescent { restarts: *restarts, resolution: *resolution }
                }
                AuxConfig::Fixed { p12, p_hat } => {
                    AuxSearch::Fixed { p12: joint(p12, "achievability p12")?, p_hat: joint(p_hat, "achievability p_hat")? }
                }
            };
        }
        cfg.initializer = match self.initializer {
            Some(InitializerConfig::RdSeeded) => Initializer::RdSeeded,
            _ => Initializer::Uniform,
        };
        cfg.inner_law = match self.inner_law {
            Some(InnerLawConfig::Marginal) => InnerLaw::Marginal,
            _ => InnerLaw::Conditional,
        };
        cfg.pairs().map_err(config_err("achievability"))?;
        Ok(cfg)
    }
}

impl SimulationSection {
    fn build(&self) -> Result<Simulation, CliError> {
        if self.trials == 0 {
            return Err(CliError::Config("simulation trials must be at least 1".into()));
        }
        let mode = match self.mode {
            ModeConfig::FixedCodebook => SimMode::FixedCodebook,
            ModeConfig::Ensemble if self.trials_per_codebook == 0 => {
                return Err(CliError::Config("trials_per_codebook must be at least 1".into()));
            }
            ModeConfig::Ensemble => SimMode::Ensemble { trials_per_codebook: self.trials_per_codebook },
        };
        let scheme = self
            .scheme
            .as_ref()
            .map(|s| {
                Ok::<_, CliError>(Scheme {
                    m1: s.m1,
                    m2: s.m2,
                    p_hat: joint(&s.p_hat, "simulation p_hat")?,
                    p12: joint(&s.p12, "simulation p12")?,
                })
            })
            .transpose()?;
        Ok(Simulation { trials: self.trials, mode, scheme })
    }
}
