//! End-to-end runs: unweighted fit, scheme weights, weighted fit,
//! optional re-weighting, synthetic replicates, utility table, artifacts.
//!
//! All randomness derives from one root seed through named substreams.
//! Sampler stages use `sampler/0` (unweighted), `sampler/1` (weighted),
//! `sampler/2` (every re-weighting trial) and `sampler/3` (the LW fit that
//! sets an unspecified SW target). Synthetic replicates for the i-th
//! variant use `synth/i`; the data bootstrap uses the root seed's
//! `bootstrap` stream.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{fit_and_bound, Fit};
use crate::generators::Generator;
use crate::io::{read_counts_file, ColumnSelector};
use crate::lipschitz::LipschitzOptions;
use crate::model::{Dataset, Family, ModelSpec};
use crate::provenance::Provenance;
use crate::reweight::{reweight_with_refit, ReweightConfig, ReweightOutcome, ReweightRun};
use crate::rng::{self, substream_seed};
use crate::sampler::{Diagnostics, SamplerConfig};
use crate::synth::{self, UtilityConfig, UtilityTable};
use crate::weights::{
    cw_weights, lw_weights, sw_weights, Scheme, WeightSchemeConfig, WeightVector,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Where the confidential data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InputSource {
    Csv {
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        column: Option<ColumnSelector>,
    },
    /// Built-in generator, seeded from the root seed's `generator` stream.
    Generator { generator: Generator, n: usize },
}

impl InputSource {
    pub fn load(&self, seed: u64) -> Result<Dataset> {
        match self {
            InputSource::Csv { path, column } => read_counts_file(path, column.as_ref()),
            InputSource::Generator { generator, n } => generator.generate(*n, seed),
        }
    }
}

/// Sampler settings without a seed; seeds come from the pipeline root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSettings {
    pub n_chains: usize,
    pub n_warmup: usize,
    pub n_keep: usize,
    pub target_accept: f64,
}

impl Default for SamplerSettings {
    fn default() -> Self {
        let d = SamplerConfig::default();
        SamplerSettings {
            n_chains: d.n_chains,
            n_warmup: d.n_warmup,
            n_keep: d.n_keep,
            target_accept: d.target_accept,
        }
    }
}

impl SamplerSettings {
    pub fn with_seed(&self, seed: u64) -> SamplerConfig {
        SamplerConfig {
            n_chains: self.n_chains,
            n_warmup: self.n_warmup,
            n_keep: self.n_keep,
            target_accept: self.target_accept,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSettings {
    pub replicates: usize,
    pub bootstrap: usize,
}

impl Default for SynthSettings {
    fn default() -> Self {
        SynthSettings {
            replicates: synth::DEFAULT_REPLICATES,
            bootstrap: synth::DEFAULT_BOOTSTRAP,
        }
    }
}

/// Which sensitive artifacts to write. Weights, record bounds and the
/// magnitude matrix go to `confidential/`; draws go to `draws/`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmitFlags {
    pub weights: bool,
    pub matrix: bool,
    pub draws: bool,
}

fn default_family() -> Family<f64> {
    Family::NegativeBinomial
}

fn default_scheme() -> Scheme {
    Scheme::Lw
}

fn default_true() -> bool {
    true
}

fn default_seed() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub input: InputSource,
    #[serde(default = "default_family")]
    pub family: Family<f64>,
    /// `lw`, `cw` or `sw`.
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    /// `c`, `g`, CW radius, and the quantile level of the unweighted report.
    #[serde(default)]
    pub weights: WeightSchemeConfig<f64>,
    /// SW target bound; when absent the SW synthesizer is matched to an LW
    /// fit under the same weight settings.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sw_target: Option<f64>,
    #[serde(default = "default_true")]
    pub reweight: bool,
    #[serde(default)]
    pub reweight_config: ReweightConfig<f64>,
    #[serde(default)]
    pub sampler: SamplerSettings,
    /// Quantile level and matrix cap for the weighted and re-weighted fits.
    #[serde(default)]
    pub lipschitz: LipschitzOptions<f64>,
    #[serde(default)]
    pub synth: SynthSettings,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub emit: EmitFlags,
    /// Fail (exit status 4) when a chain or the `k` search does not
    /// converge. Artifacts are still written.
    #[serde(default = "default_true")]
    pub require_convergence: bool,
}

impl PipelineConfig {
    pub fn new(input: InputSource) -> Self {
        PipelineConfig {
            input,
            family: default_family(),
            scheme: default_scheme(),
            weights: WeightSchemeConfig::default(),
            sw_target: None,
            reweight: true,
            reweight_config: ReweightConfig::default(),
            sampler: SamplerSettings::default(),
            lipschitz: LipschitzOptions::default(),
            synth: SynthSettings::default(),
            seed: default_seed(),
            output: None,
            emit: EmitFlags::default(),
            require_convergence: true,
        }
    }

    /// Parses TOML, or JSON when the text starts with `{`.
    pub fn parse(text: &str) -> Result<Self> {
        if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| Error::config(format!("config: {e}")))
        } else {
            toml::from_str(text).map_err(|e| Error::config(format!("config: {e}")))
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if !matches!(self.scheme, Scheme::Lw | Scheme::Cw | Scheme::Sw) {
            return Err(Error::config(format!(
                "scheme must be lw, cw or sw, not {}",
                self.scheme.label()
            )));
        }
        if let InputSource::Generator { generator, n } = &self.input {
            generator.validate()?;
            if *n < 2 {
                return Err(Error::config(
                    "generated datasets need at least two records",
                ));
            }
        }
        self.weights.validate()?;
        if let Some(t) = self.sw_target {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::config("sw_target must be positive"));
            }
        }
        if self.reweight {
            self.reweight_config.validate()?;
        }
        self.sampler.with_seed(self.seed).validate()?;
        if !(self.lipschitz.thresh > 0.0 && self.lipschitz.thresh <= 1.0) {
            return Err(Error::config("lipschitz thresh must lie in (0, 1]"));
        }
        if self.synth.replicates == 0 {
            return Err(Error::config("need at least one synthetic replicate"));
        }
        if self.synth.replicates > self.sampler.n_chains * self.sampler.n_keep {
            return Err(Error::config(format!(
                "{} replicates requested from {} draws",
                self.synth.replicates,
                self.sampler.n_chains * self.sampler.n_keep
            )));
        }
        if self.synth.bootstrap < 2 {
            return Err(Error::config("bootstrap needs at least two resamples"));
        }
        Ok(())
    }

    pub fn spec(&self) -> ModelSpec<f64> {
        ModelSpec::intercept_only(self.family.clone())
    }

    pub fn stage_sampler(&self, stage: u64) -> SamplerConfig {
        self.sampler
            .with_seed(substream_seed(self.seed, rng::SAMPLER, stage))
    }

    pub fn stage_settings(&self) -> StageSettings<'_> {
        StageSettings {
            scheme: self.scheme,
            weights: &self.weights,
            sw_target: self.sw_target,
            reweight: self.reweight.then_some(&self.reweight_config),
            sampler: &self.sampler,
            lipschitz: &self.lipschitz,
            seed: self.seed,
        }
    }
}

/// Everything needed to fit the stages, independent of I/O.
#[derive(Debug, Clone, Copy)]
pub struct StageSettings<'a> {
    pub scheme: Scheme,
    pub weights: &'a WeightSchemeConfig<f64>,
    pub sw_target: Option<f64>,
    pub reweight: Option<&'a ReweightConfig<f64>>,
    pub sampler: &'a SamplerSettings,
    pub lipschitz: &'a LipschitzOptions<f64>,
    pub seed: u64,
}

pub const STAGE_UNWEIGHTED: u64 = 0;
pub const STAGE_WEIGHTED: u64 = 1;
pub const STAGE_REWEIGHT: u64 = 2;
pub const STAGE_SW_REFERENCE: u64 = 3;

#[derive(Debug, Clone)]
pub struct Stages {
    pub unweighted: Fit<f64>,
    pub weighted: Fit<f64>,
    pub reweight: Option<ReweightRun<f64>>,
}

impl Stages {
    /// `(variant name, fit)` in release order.
    pub fn variants(&self, scheme: Scheme) -> Vec<(String, &Fit<f64>)> {
        let mut v = vec![
            ("unweighted".to_string(), &self.unweighted),
            (scheme.label().to_string(), &self.weighted),
        ];
        if let Some(rw) = &self.reweight {
            v.push((format!("{}_final", scheme.label()), &rw.fit));
        }
        v
    }
}

fn stage_config(settings: &StageSettings<'_>, stage: u64) -> SamplerConfig {
    settings
        .sampler
        .with_seed(substream_seed(settings.seed, rng::SAMPLER, stage))
}

/// Weights for `settings.scheme` given the unweighted fit.
pub fn scheme_weights(
    spec: &ModelSpec<f64>,
    dataset: &Dataset,
    unweighted: &Fit<f64>,
    settings: &StageSettings<'_>,
    keep_matrix: bool,
) -> Result<WeightVector<f64>> {
    match settings.scheme {
        Scheme::Lw => lw_weights(&unweighted.report, settings.weights),
        Scheme::Cw => cw_weights(dataset, settings.weights),
        Scheme::Sw => {
            let target = match settings.sw_target {
                Some(t) => t,
                None => {
                    let lw = lw_weights(&unweighted.report, settings.weights)?;
                    let reference = fit_and_bound(
                        spec,
                        dataset,
                        &lw,
                        &stage_config(settings, STAGE_SW_REFERENCE),
                        settings.lipschitz,
                        keep_matrix,
                    )?;
                    reference.report.overall
                }
            };
            sw_weights(unweighted.report.overall, target, dataset.len())
        }
        other => Err(Error::config(format!(
            "{} is not a weighting scheme",
            other.label()
        ))),
    }
}

/// Runs the fits: unweighted, weighted, and (when configured) re-weighted.
pub fn run_stages(
    spec: &ModelSpec<f64>,
    dataset: &Dataset,
    settings: &StageSettings<'_>,
    keep_matrix: bool,
) -> Result<Stages> {
    let unweighted_opts = LipschitzOptions {
        thresh: settings.weights.thresh,
        max_matrix_entries: settings.lipschitz.max_matrix_entries,
    };
    let unweighted = fit_and_bound(
        spec,
        dataset,
        &WeightVector::unit(dataset.len()),
        &stage_config(settings, STAGE_UNWEIGHTED),
        &unweighted_opts,
        keep_matrix,
    )?;
    let alphas = scheme_weights(spec, dataset, &unweighted, settings, keep_matrix)?;
    let weighted = fit_and_bound(
        spec,
        dataset,
        &alphas,
        &stage_config(settings, STAGE_WEIGHTED),
        settings.lipschitz,
        keep_matrix,
    )?;
    let reweight = match settings.reweight {
        Some(cfg) => Some(reweight_with_refit(
            spec,
            dataset,
            &weighted,
            &stage_config(settings, STAGE_REWEIGHT),
            settings.lipschitz,
            cfg,
            keep_matrix,
        )?),
        None => None,
    };
    Ok(Stages {
        unweighted,
        weighted,
        reweight,
    })
}

/// Public per-variant bound summary; no per-record values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundSummary {
    pub variant: String,
    pub overall: f64,
    pub epsilon_local: f64,
    pub thresh: f64,
    pub n_draws: usize,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantDiagnostics {
    pub variant: String,
    pub diagnostics: Diagnostics,
}

/// Written next to the artifacts; rerunning it reproduces them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub data_fingerprint: String,
    pub n_records: usize,
    pub config: PipelineConfig,
}

impl Manifest {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::config(format!("manifest: {e}")))
    }
}

#[derive(Debug, Clone)]
pub struct PipelineResult {
    pub dataset: Dataset,
    pub stages: Stages,
    pub bounds: Vec<BoundSummary>,
    pub utility: UtilityTable,
    pub reweight: Option<ReweightOutcome<f64>>,
    /// Human-readable convergence problems; empty when all is well.
    pub issues: Vec<String>,
    pub output: PathBuf,
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn mkdir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_with<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(&mut Vec<u8>) -> Result<()>,
{
    let mut buf = Vec::new();
    f(&mut buf)?;
    write(path, buf)
}

/// Runs the configured pipeline, writing artifacts under `output`:
///
/// - `manifest.json`
/// - `lipschitz.json`, `diagnostics.json`, `reweight.json`
/// - `utility.csv`, `utility.json`
/// - `synthetic/<variant>/replicate_NNN.csv`, `synthetic/<variant>/sources.csv`
/// - `confidential/` and `draws/` only under the emit flags
///
/// With `require_convergence`, unconverged chains or `k` search end in
/// [`Error::Convergence`] after the artifacts are written.
pub fn run_pipeline(config: &PipelineConfig, output: &Path) -> Result<PipelineResult> {
    config.validate()?;
    let dataset = config.input.load(config.seed)?;
    run_pipeline_on(config, dataset, output)
}

/// Reruns a manifest, checking the input still matches it.
pub fn rerun_manifest(manifest: &Manifest, output: &Path) -> Result<PipelineResult> {
    manifest.config.validate()?;
    let dataset = manifest.config.input.load(manifest.config.seed)?;
    if dataset.fingerprint() != manifest.data_fingerprint {
        return Err(Error::data(
            "input data differ from the data recorded in the manifest",
        ));
    }
    run_pipeline_on(&manifest.config, dataset, output)
}

fn run_pipeline_on(
    config: &PipelineConfig,
    dataset: Dataset,
    output: &Path,
) -> Result<PipelineResult> {
    let spec = config.spec();
    spec.validate(dataset.len())?;
    mkdir(output)?;
    let stages = run_stages(
        &spec,
        &dataset,
        &config.stage_settings(),
        config.emit.matrix,
    )?;
    let variants = stages.variants(config.scheme);

    let mut bundles = Vec::new();
    for (i, (name, fit)) in variants.iter().enumerate() {
        let seed = substream_seed(config.seed, rng::SYNTH, i as u64);
        let bundle = synth::generate(
            &spec,
            &fit.draws,
            dataset.len(),
            config.synth.replicates,
            seed,
        )?;
        bundle.write_dir(&output.join("synthetic").join(name))?;
        bundles.push((name.as_str(), bundle));
    }
    let refs: Vec<(&str, &synth::SyntheticBundle)> = bundles.iter().map(|(n, b)| (*n, b)).collect();
    let utility = synth::utility_table(
        &dataset,
        &refs,
        &UtilityConfig {
            bootstrap_resamples: config.synth.bootstrap,
            seed: config.seed,
        },
    )?;
    write_with(&output.join("utility.csv"), |b| utility.write_csv(b))?;
    write(&output.join("utility.json"), utility.to_json()?)?;

    let bounds: Vec<BoundSummary> = variants
        .iter()
        .map(|(name, fit)| BoundSummary {
            variant: name.clone(),
            overall: fit.report.overall,
            epsilon_local: fit.report.epsilon_local,
            thresh: fit.report.thresh,
            n_draws: fit.report.n_draws,
            provenance: fit.report.provenance.clone(),
        })
        .collect();
    write(
        &output.join("lipschitz.json"),
        serde_json::to_string_pretty(&bounds)?,
    )?;
    let diagnostics: Vec<VariantDiagnostics> = variants
        .iter()
        .map(|(name, fit)| VariantDiagnostics {
            variant: name.clone(),
            diagnostics: fit.draws.diagnostics.clone(),
        })
        .collect();
    write(
        &output.join("diagnostics.json"),
        serde_json::to_string_pretty(&diagnostics)?,
    )?;
    let reweight = stages.reweight.as_ref().map(|r| r.outcome.clone());
    if let Some(o) = &reweight {
        write(&output.join("reweight.json"), o.to_json()?)?;
    }

    if config.emit.weights || config.emit.matrix {
        let dir = output.join("confidential");
        mkdir(&dir)?;
        for (name, fit) in &variants {
            if config.emit.weights {
                write_with(&dir.join(format!("weights_{name}.csv")), |b| {
                    fit.weights.write_csv(b)
                })?;
                write(
                    &dir.join(format!("record_bounds_{name}.json")),
                    serde_json::to_string_pretty(&fit.report)?,
                )?;
            }
            if config.emit.matrix {
                if let Some(m) = &fit.matrix {
                    write_with(&dir.join(format!("matrix_{name}.csv")), |b| m.write_csv(b))?;
                }
            }
        }
    }
    if config.emit.draws {
        let dir = output.join("draws");
        mkdir(&dir)?;
        for (name, fit) in &variants {
            write_with(&dir.join(format!("draws_{name}.csv")), |b| {
                fit.draws.write_csv(b)
            })?;
        }
    }

    let mut manifest_config = config.clone();
    manifest_config.output = Some(output.to_path_buf());
    let manifest = Manifest {
        version: VERSION.to_string(),
        data_fingerprint: dataset.fingerprint(),
        n_records: dataset.len(),
        config: manifest_config,
    };
    write(
        &output.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;

    let mut issues = Vec::new();
    for (name, fit) in &variants {
        if !fit.converged() {
            issues.push(format!(
                "{name}: max split-Rhat {:.4} exceeds {}",
                fit.draws.diagnostics.max_rhat,
                crate::sampler::RHAT_LIMIT
            ));
        }
    }
    if let Some(o) = &reweight {
        if !o.converged {
            issues.push(format!(
                "k search: closest relative bound error {:.4} after {} trials exceeds tolerance",
                o.relative_error, o.iterations
            ));
        }
    }
    if config.require_convergence && !issues.is_empty() {
        return Err(Error::Convergence(issues.join("; ")));
    }
    Ok(PipelineResult {
        dataset,
        stages,
        bounds,
        utility,
        reweight,
        issues,
        output: output.to_path_buf(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> PipelineConfig {
        let mut c = PipelineConfig::new(InputSource::Generator {
            generator: Generator::skewed_mixture(),
            n: 120,
        });
        c.sampler = SamplerSettings {
            n_chains: 2,
            n_warmup: 500,
            n_keep: 250,
            ..SamplerSettings::default()
        };
        c.synth.bootstrap = 200;
        c.seed = 17;
        c.require_convergence = false;
        c
    }

    fn file_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
        let mut out = Vec::new();
        let mut stack = vec![dir.to_path_buf()];
        while let Some(d) = stack.pop() {
            for e in fs::read_dir(&d).unwrap() {
                let p = e.unwrap().path();
                if p.is_dir() {
                    stack.push(p);
                } else if p.file_name().unwrap() != "manifest.json" {
                    out.push((
                        p.strip_prefix(dir).unwrap().display().to_string(),
                        fs::read(&p).unwrap(),
                    ));
                }
            }
        }
        out.sort();
        out
    }

    #[test]
    fn artifacts_and_manifest_rerun() {
        let tmp = tempfile::tempdir().unwrap();
        let a = tmp.path().join("a");
        let r = run_pipeline(&small_config(), &a).unwrap();
        for f in [
            "manifest.json",
            "lipschitz.json",
            "diagnostics.json",
            "reweight.json",
            "utility.csv",
            "utility.json",
        ] {
            assert!(a.join(f).is_file(), "{f}");
        }
        assert!(a.join("synthetic/lw_final/replicate_020.csv").is_file());
        assert!(!a.join("confidential").exists());
        assert!(!a.join("draws").exists());
        assert_eq!(r.bounds.len(), 3);
        assert_eq!(r.bounds[2].epsilon_local, 2.0 * r.bounds[2].overall);

        let m = Manifest::from_file(&a.join("manifest.json")).unwrap();
        assert_eq!(m.version, VERSION);
        let b = tmp.path().join("b");
        rerun_manifest(&m, &b).unwrap();
        assert_eq!(file_bytes(&a), file_bytes(&b));
    }

    #[test]
    fn confidential_outputs_only_on_request() {
        let tmp = tempfile::tempdir().unwrap();
        let mut c = small_config();
        c.scheme = Scheme::Cw;
        c.reweight = false;
        c.emit = EmitFlags {
            weights: true,
            matrix: true,
            draws: true,
        };
        run_pipeline(&c, tmp.path()).unwrap();
        let conf = tmp.path().join("confidential");
        assert!(conf.join("weights_cw.csv").is_file());
        assert!(conf.join("record_bounds_cw.json").is_file());
        assert!(conf.join("matrix_unweighted.csv").is_file());
        assert!(tmp.path().join("draws/draws_cw.csv").is_file());
        assert!(!tmp.path().join("reweight.json").exists());
        let w = WeightVector::<f64>::read_csv(fs::File::open(conf.join("weights_cw.csv")).unwrap())
            .unwrap();
        assert_eq!(w.scheme(), Scheme::Cw);
    }

    #[test]
    fn sw_matches_lw_bound_when_unspecified() {
        let c = small_config();
        let mut s = c.clone();
        s.scheme = Scheme::Sw;
        s.reweight = false;
        let spec = s.spec();
        let d = s.input.load(s.seed).unwrap();
        let st = run_stages(&spec, &d, &s.stage_settings(), false).unwrap();
        assert_eq!(st.weighted.weights.scheme(), Scheme::Sw);
        let a = st.weighted.weights.alphas()[0];
        assert!(st.weighted.weights.alphas().iter().all(|&x| x == a));
        assert!(a > 0.0 && a <= 1.0);
    }

    #[test]
    fn config_parsing() {
        let text = r#"
            seed = 5
            scheme = "cw"
            [input]
            kind = "generator"
            n = 50
            generator = { kind = "poisson", mu = 20.0 }
            [weights]
            c = 0.9
            g = 0.1
            thresh = 1.0
            radius = 3.0
            [sampler]
            n_keep = 200
        "#;
        let c = PipelineConfig::parse(text).unwrap();
        assert_eq!(c.seed, 5);
        assert_eq!(c.scheme, Scheme::Cw);
        assert_eq!(c.weights.radius, Some(3.0));
        assert_eq!(c.sampler.n_keep, 200);
        assert_eq!(c.sampler.n_chains, 4);
        assert!(c.reweight);
        c.validate().unwrap();
        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(PipelineConfig::parse(&json).unwrap(), c);
        assert!(PipelineConfig::parse("seed = 1").is_err());
        assert!(PipelineConfig::parse("bogus = 1\n[input]\nkind=\"csv\"\npath=\"x\"").is_err());
        let mut bad = c.clone();
        bad.scheme = Scheme::Unit;
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn missing_or_changed_input() {
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("x.csv");
        fs::write(&path, "").unwrap();
        let mut c = small_config();
        c.input = InputSource::Csv {
            path: path.clone(),
            column: None,
        };
        assert!(matches!(
            run_pipeline(&c, &tmp.path().join("o")),
            Err(Error::Data(_))
        ));
        c.input = InputSource::Csv {
            path: tmp.path().join("missing.csv"),
            column: None,
        };
        assert!(matches!(
            run_pipeline(&c, &tmp.path().join("o")),
            Err(Error::Io { .. })
        ));

        let m = Manifest {
            version: VERSION.into(),
            data_fingerprint: "0".into(),
            n_records: 2,
            config: small_config(),
        };
        assert!(matches!(
            rerun_manifest(&m, &tmp.path().join("o")),
            Err(Error::Data(_))
        ));
    }
}
