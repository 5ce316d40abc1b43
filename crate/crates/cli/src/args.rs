use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dpsynth::generators::Generator;
use dpsynth::io::ColumnSelector;
use dpsynth::pipeline::{InputSource, PipelineConfig};
use dpsynth::{Error, Family, Result, Scheme};

#[derive(Debug, Parser)]
#[command(
    name = "dpsynth",
    version,
    about = "Differentially private synthetic count data"
)]
pub struct Cli {
    /// Worker threads for all parallel work (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a synthesizer (unweighted unless --weights is given) and report its bound.
    Fit(FitArgs),
    /// Compute LW, CW or SW record weights.
    Weights(RunArgs),
    /// Re-weight a weighted synthesizer and refit.
    Reweight(ReweightArgs),
    /// Fit and write synthetic replicates.
    Synthesize(FitArgs),
    /// Compare confidential data against synthetic replicate directories.
    Utility(UtilityArgs),
    /// Monte Carlo study of bound spread across generated databases.
    Mc(McArgs),
    /// Run everything end to end.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum GeneratorKind {
    Poisson,
    Nb,
    NbMixture,
    SalaryLike,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FamilyKind {
    Poisson,
    Nb,
    NbMixture,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SchemeKind {
    Lw,
    Cw,
    Sw,
}

impl From<SchemeKind> for Scheme {
    fn from(s: SchemeKind) -> Self {
        match s {
            SchemeKind::Lw => Scheme::Lw,
            SchemeKind::Cw => Scheme::Cw,
            SchemeKind::Sw => Scheme::Sw,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct GeneratorArgs {
    /// Built-in data generator.
    #[arg(long, value_enum)]
    pub generator: Option<GeneratorKind>,
    /// Generator mean (poisson, nb).
    #[arg(long, default_value_t = 100.0)]
    pub gen_mu: f64,
    /// Generator dispersion (nb).
    #[arg(long, default_value_t = 10.0)]
    pub gen_phi: f64,
    /// Records to generate.
    #[arg(long, short = 'n')]
    pub n: Option<usize>,
}

impl GeneratorArgs {
    pub fn generator(&self) -> Option<Generator> {
        self.generator.map(|g| match g {
            GeneratorKind::Poisson => Generator::Poisson { mu: self.gen_mu },
            GeneratorKind::Nb => Generator::NegativeBinomial {
                mu: self.gen_mu,
                phi: self.gen_phi,
            },
            GeneratorKind::NbMixture => Generator::skewed_mixture(),
            GeneratorKind::SalaryLike => Generator::SalaryLike,
        })
    }
}

/// Flags shared by every fitting command. Flags override `--config`.
#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// TOML or JSON pipeline configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// CSV of counts.
    #[arg(long, short = 'i', conflicts_with = "generator")]
    pub input: Option<PathBuf>,
    /// Column of a multi-column CSV: zero-based index or header name.
    #[arg(long)]
    pub column: Option<String>,
    #[command(flatten)]
    pub gen: GeneratorArgs,
    /// Synthesizer family.
    #[arg(long, value_enum)]
    pub family: Option<FamilyKind>,
    /// Mixture proportions for the nb-mixture family, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub proportions: Option<Vec<f64>>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub warmup: Option<usize>,
    /// Kept draws per chain.
    #[arg(long)]
    pub keep: Option<usize>,
    #[arg(long)]
    pub target_accept: Option<f64>,
    /// Quantile level for the weighted bounds (1 = strict maximum).
    #[arg(long)]
    pub thresh: Option<f64>,
    /// Largest magnitude matrix kept in memory, in entries.
    #[arg(long)]
    pub matrix_cap: Option<usize>,
    /// Output directory.
    #[arg(long, short = 'o')]
    pub out: Option<PathBuf>,
    /// Write weights and record bounds to <out>/confidential.
    #[arg(long)]
    pub emit_weights: bool,
    /// Write magnitude matrices to <out>/confidential.
    #[arg(long)]
    pub emit_matrix: bool,
    /// Write posterior draws to <out>/draws.
    #[arg(long)]
    pub emit_draws: bool,
    /// Succeed even when chains or the k search do not converge.
    #[arg(long)]
    pub allow_unconverged: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SchemeArgs {
    #[arg(long, value_enum)]
    pub scheme: Option<SchemeKind>,
    /// Weight scale c.
    #[arg(long)]
    pub c: Option<f64>,
    /// Weight shift g.
    #[arg(long)]
    pub g: Option<f64>,
    /// CW ball radius on the count scale (default 5% of the sample sd).
    #[arg(long)]
    pub radius: Option<f64>,
    /// Quantile level of the unweighted report used by LW.
    #[arg(long)]
    pub risk_thresh: Option<f64>,
    /// SW target bound (default: match an LW fit).
    #[arg(long)]
    pub sw_target: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct KArgs {
    #[arg(long)]
    pub k_init: Option<f64>,
    /// Relative bound-match tolerance.
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub k_min: Option<f64>,
    #[arg(long)]
    pub k_max: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// Synthetic replicates per synthesizer.
    #[arg(long, short = 'm')]
    pub replicates: Option<usize>,
    /// Bootstrap resamples for the data intervals.
    #[arg(long)]
    pub bootstrap: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub scheme: SchemeArgs,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Weight CSV as written with --emit-weights; unit weights otherwise.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[command(flatten)]
    pub synth: SynthArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ReweightArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub scheme: SchemeArgs,
    #[command(flatten)]
    pub k: KArgs,
    /// Weights to re-weight; computed from --scheme when absent.
    #[arg(long)]
    pub weights: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct PipelineArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub scheme: SchemeArgs,
    #[command(flatten)]
    pub k: KArgs,
    #[command(flatten)]
    pub synth: SynthArgs,
    /// Skip the re-weighting step.
    #[arg(long)]
    pub no_reweight: bool,
    /// Rerun a manifest.json from an earlier run; other flags except --out are ignored.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct UtilityArgs {
    /// Confidential CSV of counts.
    #[arg(long, short = 'i')]
    pub input: PathBuf,
    #[arg(long)]
    pub column: Option<String>,
    /// Synthetic replicate directory as NAME=DIR; repeat for each synthesizer.
    #[arg(long = "synthetic", required = true)]
    pub synthetic: Vec<String>,
    #[arg(long, default_value_t = dpsynth::synth::DEFAULT_BOOTSTRAP)]
    pub bootstrap: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, short = 'o')]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct McArgs {
    /// JSON file holding a full Monte Carlo configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub gen: GeneratorArgs,
    #[arg(long, value_enum)]
    pub family: Option<FamilyKind>,
    /// Replicate databases.
    #[arg(long, short = 'r')]
    pub replicates: Option<usize>,
    #[command(flatten)]
    pub scheme: SchemeArgs,
    #[command(flatten)]
    pub k: KArgs,
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long)]
    pub keep: Option<usize>,
    #[arg(long)]
    pub thresh: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Use one seed for every replicate.
    #[arg(long)]
    pub identical_seeds: bool,
    #[arg(long, short = 'o')]
    pub out: Option<PathBuf>,
}

pub fn family(kind: FamilyKind, proportions: Option<&[f64]>) -> Family<f64> {
    match kind {
        FamilyKind::Poisson => Family::Poisson,
        FamilyKind::Nb => Family::NegativeBinomial,
        FamilyKind::NbMixture => Family::NegativeBinomialMixture {
            proportions: proportions.map_or_else(|| vec![0.2, 0.8], <[f64]>::to_vec),
        },
    }
}

fn column(raw: &Option<String>) -> Result<Option<ColumnSelector>> {
    raw.as_deref().map(str::parse).transpose()
}

impl CommonArgs {
    /// Base configuration from `--config` or the input flags, with every
    /// given flag applied on top.
    pub fn config(&self) -> Result<PipelineConfig> {
        let flag_input = match (&self.input, self.gen.generator()) {
            (Some(path), _) => Some(InputSource::Csv {
                path: path.clone(),
                column: column(&self.column)?,
            }),
            (None, Some(generator)) => Some(InputSource::Generator {
                generator,
                n: self.gen.n.unwrap_or(1000),
            }),
            (None, None) => None,
        };
        let mut c = match (&self.config, flag_input) {
            (Some(path), input) => {
                let mut c = PipelineConfig::from_file(path)?;
                if let Some(input) = input {
                    c.input = input;
                }
                c
            }
            (None, Some(input)) => PipelineConfig::new(input),
            (None, None) => {
                return Err(Error::config(
                    "no input: pass --input, --generator or --config",
                ))
            }
        };
        if let (InputSource::Generator { n, .. }, Some(flag_n)) = (&mut c.input, self.gen.n) {
            *n = flag_n;
        }
        if let Some(f) = self.family {
            c.family = family(f, self.proportions.as_deref());
        } else if let (Some(p), Family::NegativeBinomialMixture { proportions }) =
            (&self.proportions, &mut c.family)
        {
            *proportions = p.clone();
        }
        macro_rules! set {
            ($($flag:expr => $field:expr),* $(,)?) => {
                $(if let Some(v) = $flag { $field = v; })*
            };
        }
        set! {
            self.seed => c.seed,
            self.chains => c.sampler.n_chains,
            self.warmup => c.sampler.n_warmup,
            self.keep => c.sampler.n_keep,
            self.target_accept => c.sampler.target_accept,
            self.thresh => c.lipschitz.thresh,
            self.matrix_cap => c.lipschitz.max_matrix_entries,
        }
        if let Some(out) = &self.out {
            c.output = Some(out.clone());
        }
        c.emit.weights |= self.emit_weights;
        c.emit.matrix |= self.emit_matrix;
        c.emit.draws |= self.emit_draws;
        if self.allow_unconverged {
            c.require_convergence = false;
        }
        Ok(c)
    }
}

impl SchemeArgs {
    pub fn apply(&self, c: &mut PipelineConfig) {
        if let Some(s) = self.scheme {
            c.scheme = s.into();
        }
        if let Some(v) = self.c {
            c.weights.c = v;
        }
        if let Some(v) = self.g {
            c.weights.g = v;
        }
        if let Some(v) = self.radius {
            c.weights.radius = Some(v);
        }
        if let Some(v) = self.risk_thresh {
            c.weights.thresh = v;
        }
        if let Some(v) = self.sw_target {
            c.sw_target = Some(v);
        }
    }
}

impl KArgs {
    pub fn apply(&self, r: &mut dpsynth::ReweightConfig<f64>) {
        if let Some(v) = self.k_init {
            r.k_init = v;
        }
        if let Some(v) = self.tolerance {
            r.tolerance = v;
        }
        if let Some(v) = self.max_iters {
            r.max_iters = v;
        }
        if let Some(v) = self.k_min {
            r.k_bounds.0 = v;
        }
        if let Some(v) = self.k_max {
            r.k_bounds.1 = v;
        }
    }
}

impl SynthArgs {
    pub fn apply(&self, c: &mut PipelineConfig) {
        if let Some(v) = self.replicates {
            c.synth.replicates = v;
        }
        if let Some(v) = self.bootstrap {
            c.synth.bootstrap = v;
        }
    }
}
