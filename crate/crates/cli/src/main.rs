mod args;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use serde_json::{json, Value};

use args::{Cli, Command, FitArgs, McArgs, PipelineArgs, ReweightArgs, RunArgs, UtilityArgs};
use dpsynth::fit::{fit_and_bound, Fit};
use dpsynth::generators::Generator;
use dpsynth::io::{read_counts_file, ColumnSelector};
use dpsynth::lipschitz::LipschitzOptions;
use dpsynth::mc::{run_mc, McConfig};
use dpsynth::pipeline::{
    rerun_manifest, run_pipeline, scheme_weights, BoundSummary, Manifest, PipelineConfig,
    PipelineResult, StageSettings, VariantDiagnostics, STAGE_REWEIGHT, STAGE_UNWEIGHTED,
    STAGE_WEIGHTED,
};
use dpsynth::reweight::reweight_with_refit;
use dpsynth::rng::{self, substream_seed};
use dpsynth::synth::{self, SyntheticBundle, UtilityConfig};
use dpsynth::weights::cw_weights;
use dpsynth::{Dataset, Error, Family, Provenance, Result, Scheme, WeightVector};

const DEFAULT_OUT: &str = "dpsynth-out";

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
        {
            return fail(&Error::config(format!("--jobs: {e}")));
        }
    }
    let result = match &cli.command {
        Command::Fit(a) => fit(a, false),
        Command::Synthesize(a) => fit(a, true),
        Command::Weights(a) => weights(a),
        Command::Reweight(a) => reweight(a),
        Command::Utility(a) => utility(a),
        Command::Mc(a) => mc(a),
        Command::Pipeline(a) => pipeline(a),
    };
    match result {
        Ok(summary) => {
            println!(
                "{}",
                serde_json::to_string_pretty(&summary).expect("summary serializes")
            );
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e),
    }
}

fn fail(e: &Error) -> ExitCode {
    let body = json!({ "error": { "kind": e.kind(), "message": e.to_string() } });
    eprintln!("{body}");
    ExitCode::from(e.exit_code() as u8)
}

fn out_dir(c: &PipelineConfig) -> PathBuf {
    c.output
        .clone()
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn write_csv_with<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(&mut Vec<u8>) -> Result<()>,
{
    let mut buf = Vec::new();
    f(&mut buf)?;
    write(path, buf)
}

fn summary_of(variant: &str, fit: &Fit<f64>) -> BoundSummary {
    BoundSummary {
        variant: variant.to_string(),
        overall: fit.report.overall,
        epsilon_local: fit.report.epsilon_local,
        thresh: fit.report.thresh,
        n_draws: fit.report.n_draws,
        provenance: fit.report.provenance.clone(),
    }
}

/// Bounds, diagnostics and any requested sensitive artifacts for a set of fits.
fn write_fits(c: &PipelineConfig, out: &Path, fits: &[(&str, &Fit<f64>)]) -> Result<Vec<String>> {
    let bounds: Vec<BoundSummary> = fits.iter().map(|(n, f)| summary_of(n, f)).collect();
    write(
        &out.join("lipschitz.json"),
        serde_json::to_string_pretty(&bounds)?,
    )?;
    let diags: Vec<VariantDiagnostics> = fits
        .iter()
        .map(|(n, f)| VariantDiagnostics {
            variant: n.to_string(),
            diagnostics: f.draws.diagnostics.clone(),
        })
        .collect();
    write(
        &out.join("diagnostics.json"),
        serde_json::to_string_pretty(&diags)?,
    )?;
    let conf = out.join("confidential");
    for (name, fit) in fits {
        if c.emit.weights {
            write_csv_with(&conf.join(format!("weights_{name}.csv")), |b| {
                fit.weights.write_csv(b)
            })?;
            write(
                &conf.join(format!("record_bounds_{name}.json")),
                serde_json::to_string_pretty(&fit.report)?,
            )?;
        }
        if c.emit.matrix {
            if let Some(m) = &fit.matrix {
                write_csv_with(&conf.join(format!("matrix_{name}.csv")), |b| m.write_csv(b))?;
            }
        }
        if c.emit.draws {
            write_csv_with(&out.join("draws").join(format!("draws_{name}.csv")), |b| {
                fit.draws.write_csv(b)
            })?;
        }
    }
    Ok(fits
        .iter()
        .filter(|(_, f)| !f.converged())
        .map(|(n, f)| format!("{n}: max split-Rhat {:.4}", f.draws.diagnostics.max_rhat))
        .collect())
}

fn check_convergence(c: &PipelineConfig, issues: &[String]) -> Result<()> {
    if c.require_convergence && !issues.is_empty() {
        return Err(Error::Convergence(issues.join("; ")));
    }
    Ok(())
}

fn load(c: &PipelineConfig) -> Result<Dataset> {
    let d = c.input.load(c.seed)?;
    c.spec().validate(d.len())?;
    Ok(d)
}

fn read_weights(path: &Path, n: usize) -> Result<WeightVector<f64>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let w = WeightVector::read_csv(file)?;
    if w.len() != n {
        return Err(Error::data(format!(
            "weights cover {} records, data has {n}",
            w.len()
        )));
    }
    Ok(w)
}

fn unweighted_options(c: &PipelineConfig) -> LipschitzOptions<f64> {
    LipschitzOptions {
        thresh: c.weights.thresh,
        max_matrix_entries: c.lipschitz.max_matrix_entries,
    }
}

fn fit(a: &FitArgs, synthesize: bool) -> Result<Value> {
    let mut c = a.common.config()?;
    a.synth.apply(&mut c);
    c.validate()?;
    let data = load(&c)?;
    let spec = c.spec();
    let (weights, stage, opts) = match &a.weights {
        Some(p) => (
            read_weights(p, data.len())?,
            STAGE_WEIGHTED,
            c.lipschitz.clone(),
        ),
        None => (
            WeightVector::unit(data.len()),
            STAGE_UNWEIGHTED,
            unweighted_options(&c),
        ),
    };
    let fit = fit_and_bound(
        &spec,
        &data,
        &weights,
        &c.stage_sampler(stage),
        &opts,
        c.emit.matrix,
    )?;
    let out = out_dir(&c);
    let name = weights.scheme().label();
    let issues = write_fits(&c, &out, &[(name, &fit)])?;
    let mut summary = json!({
        "output": out,
        "bound": summary_of(name, &fit),
        "diagnostics": fit.draws.diagnostics,
    });
    if synthesize {
        let seed = substream_seed(c.seed, rng::SYNTH, 0);
        let bundle = synth::generate(&spec, &fit.draws, data.len(), c.synth.replicates, seed)?;
        let dir = out.join("synthetic").join(name);
        bundle.write_dir(&dir)?;
        summary["synthetic"] = json!({ "directory": dir, "replicates": bundle.len() });
    }
    check_convergence(&c, &issues)?;
    Ok(summary)
}

fn weight_stats(w: &WeightVector<f64>) -> Value {
    let a = w.alphas();
    json!({
        "scheme": w.scheme().label(),
        "config": w.config(),
        "n": a.len(),
        "min": a.iter().copied().fold(f64::INFINITY, f64::min),
        "mean": dpsynth::stats::mean(a),
        "max": a.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        "suppressed": a.iter().filter(|&&x| x == 0.0).count(),
    })
}

/// Scheme weights, running the unweighted fit only when the scheme needs it.
fn compute_weights(
    c: &PipelineConfig,
    data: &Dataset,
) -> Result<(WeightVector<f64>, Option<Fit<f64>>)> {
    let spec = c.spec();
    if c.scheme == Scheme::Cw {
        return Ok((cw_weights(data, &c.weights)?, None));
    }
    let unweighted = fit_and_bound(
        &spec,
        data,
        &WeightVector::unit(data.len()),
        &c.stage_sampler(STAGE_UNWEIGHTED),
        &unweighted_options(c),
        false,
    )?;
    let settings: StageSettings<'_> = c.stage_settings();
    let w = scheme_weights(&spec, data, &unweighted, &settings, false)?;
    Ok((w, Some(unweighted)))
}

fn weights(a: &RunArgs) -> Result<Value> {
    let mut c = a.common.config()?;
    a.scheme.apply(&mut c);
    c.validate()?;
    let data = load(&c)?;
    let (w, unweighted) = compute_weights(&c, &data)?;
    let mut summary = weight_stats(&w);
    if let Some(u) = &unweighted {
        summary["unweighted_bound"] = json!(summary_of("unweighted", u));
    }
    if c.emit.weights {
        let path = out_dir(&c)
            .join("confidential")
            .join(format!("weights_{}.csv", w.scheme().label()));
        write_csv_with(&path, |b| w.write_csv(b))?;
        summary["written"] = json!(path);
    } else {
        summary["written"] = Value::Null;
    }
    if let Some(u) = &unweighted {
        check_convergence(&c, &write_issue(u, "unweighted"))?;
    }
    Ok(summary)
}

fn write_issue(f: &Fit<f64>, name: &str) -> Vec<String> {
    if f.converged() {
        Vec::new()
    } else {
        vec![format!(
            "{name}: max split-Rhat {:.4}",
            f.draws.diagnostics.max_rhat
        )]
    }
}

fn reweight(a: &ReweightArgs) -> Result<Value> {
    let mut c = a.common.config()?;
    a.scheme.apply(&mut c);
    a.k.apply(&mut c.reweight_config);
    c.reweight = true;
    c.validate()?;
    let data = load(&c)?;
    let spec = c.spec();
    let alphas = match &a.weights {
        Some(p) => read_weights(p, data.len())?,
        None => compute_weights(&c, &data)?.0,
    };
    let weighted = fit_and_bound(
        &spec,
        &data,
        &alphas,
        &c.stage_sampler(STAGE_WEIGHTED),
        &c.lipschitz,
        c.emit.matrix,
    )?;
    let run = reweight_with_refit(
        &spec,
        &data,
        &weighted,
        &c.stage_sampler(STAGE_REWEIGHT),
        &c.lipschitz,
        &c.reweight_config,
        c.emit.matrix,
    )?;
    let out = out_dir(&c);
    let base = alphas.scheme().label().to_string();
    let final_name = format!("{base}_final");
    let mut issues = write_fits(&c, &out, &[(&base, &weighted), (&final_name, &run.fit)])?;
    write(&out.join("reweight.json"), run.outcome.to_json()?)?;
    if !run.outcome.converged {
        issues.push(format!(
            "k search: closest relative bound error {:.4}",
            run.outcome.relative_error
        ));
    }
    let summary = json!({ "output": out, "reweight": run.outcome });
    check_convergence(&c, &issues)?;
    Ok(summary)
}

fn read_bundle(dir: &Path) -> Result<SyntheticBundle> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("replicate_") && n.ends_with(".csv"))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::data(format!(
            "no replicate_*.csv files in {}",
            dir.display()
        )));
    }
    let replicates = files
        .iter()
        .map(|p| read_counts_file(p, None))
        .collect::<Result<Vec<_>>>()?;
    Ok(SyntheticBundle {
        source_draw_indices: (0..replicates.len()).collect(),
        replicates,
        provenance: Provenance::detached(Scheme::Unit),
    })
}

fn utility(a: &UtilityArgs) -> Result<Value> {
    let column: Option<ColumnSelector> = a.column.as_deref().map(str::parse).transpose()?;
    let data = read_counts_file(&a.input, column.as_ref())?;
    let mut named = Vec::new();
    for spec in &a.synthetic {
        let (name, dir) = spec
            .split_once('=')
            .ok_or_else(|| Error::config(format!("--synthetic expects NAME=DIR, got {spec:?}")))?;
        if name.is_empty() || name == "data" {
            return Err(Error::config(format!("invalid synthesizer name {name:?}")));
        }
        named.push((name.to_string(), read_bundle(Path::new(dir))?));
    }
    let refs: Vec<(&str, &SyntheticBundle)> = named.iter().map(|(n, b)| (n.as_str(), b)).collect();
    let table = synth::utility_table(
        &data,
        &refs,
        &UtilityConfig {
            bootstrap_resamples: a.bootstrap,
            seed: a.seed,
        },
    )?;
    if let Some(out) = &a.out {
        write_csv_with(&out.join("utility.csv"), |b| table.write_csv(b))?;
        write(&out.join("utility.json"), table.to_json()?)?;
    }
    Ok(serde_json::to_value(&table.rows)?)
}

fn mc_config(a: &McArgs) -> Result<McConfig> {
    let mut c = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str(&text).map_err(|e| Error::config(format!("mc config: {e}")))?
        }
        None => McConfig::poisson(100.0, 1000),
    };
    if let Some(g) = a.gen.generator() {
        c.family = match g {
            Generator::Poisson { .. } => Family::Poisson,
            _ => Family::NegativeBinomial,
        };
        c.generator = g;
    }
    if let Some(f) = a.family {
        c.family = args::family(f, None);
    }
    if let Some(n) = a.gen.n {
        c.n = n;
    }
    if let Some(r) = a.replicates {
        c.replicates = r;
    }
    if let Some(s) = a.scheme.scheme {
        c.scheme = s.into();
    }
    if let Some(v) = a.scheme.c {
        c.weights.c = v;
    }
    if let Some(v) = a.scheme.g {
        c.weights.g = v;
    }
    if let Some(v) = a.scheme.radius {
        c.weights.radius = Some(v);
    }
    if let Some(v) = a.scheme.risk_thresh {
        c.weights.thresh = v;
    }
    a.k.apply(&mut c.reweight);
    if let Some(v) = a.chains {
        c.sampler.n_chains = v;
    }
    if let Some(v) = a.warmup {
        c.sampler.n_warmup = v;
    }
    if let Some(v) = a.keep {
        c.sampler.n_keep = v;
    }
    if let Some(v) = a.thresh {
        c.lipschitz.thresh = v;
    }
    if let Some(v) = a.seed {
        c.seed = v;
    }
    c.identical_seeds |= a.identical_seeds;
    Ok(c)
}

fn mc(a: &McArgs) -> Result<Value> {
    let c = mc_config(a)?;
    let report = run_mc(&c)?;
    let out = a.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    write(&out.join("mc.json"), report.to_json()?)?;
    write_csv_with(&out.join("mc.csv"), |b| report.write_csv(b))?;
    write_csv_with(&out.join("violin.csv"), |b| report.write_violin_csv(b))?;
    Ok(json!({
        "output": out,
        "replicates": report.replicates.len(),
        "unweighted": report.unweighted,
        "reweighted": report.reweighted,
        "unconverged_replicates": report.unconverged_replicates,
    }))
}

fn pipeline_summary(r: &PipelineResult) -> Value {
    json!({
        "output": r.output,
        "bounds": r.bounds,
        "reweight": r.reweight,
        "issues": r.issues,
    })
}

fn pipeline(a: &PipelineArgs) -> Result<Value> {
    if let Some(path) = &a.manifest {
        let manifest = Manifest::from_file(path)?;
        let out = a
            .common
            .out
            .clone()
            .or_else(|| manifest.config.output.clone())
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
        return rerun_manifest(&manifest, &out).map(|r| pipeline_summary(&r));
    }
    let mut c = a.common.config()?;
    a.scheme.apply(&mut c);
    a.k.apply(&mut c.reweight_config);
    a.synth.apply(&mut c);
    if a.no_reweight {
        c.reweight = false;
    }
    let out = out_dir(&c);
    run_pipeline(&c, &out).map(|r| pipeline_summary(&r))
}
