//! The pipeline stages. Each reads the previous stages' artifacts from the
//! run directory, checks their manifests, and writes its own.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use postcut_core::ingest::{
    load_adjacency_csv, load_post_offices, load_units, read_offices_json, read_units, write_adjacency_csv,
    write_offices_json, write_units, LoadOptions, DEFAULT_ADJACENCY_TOL,
};
use postcut_core::mcmc::{Chain, ChainCheckpoint, ChainConfig, Sample};
use postcut_core::plan::{compute_stats, count_cut_edges, evaluate, seats, CutEdgeCounter, Plan};
use postcut_core::rng::substream;
use postcut_core::seeding::{kmeans_plan, srkmeans, ConvergenceReport, RebalanceConfig};
use postcut_core::stats::{
    fit_normal, gmm_cdf, histogram, select_k_bic, trace_and_running_average, GmmModel, NormalFit,
};
use postcut_core::tda::{build_network, epsilon_from_percentile, h0_persistence};
use postcut_core::{Geography, Point, PostOffice, PostalNetwork};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::manifest::{self, Manifest, MANIFEST};

/// Iterations between history flushes and checkpoints.
pub const CHECKPOINT_EVERY: u64 = 1000;

fn stage_dir(out: &Path, stage: &str) -> Result<PathBuf, CliError> {
    let dir = out.join(stage);
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    // an interrupted rerun must not leave the old manifest vouching for new files
    let m = dir.join(MANIFEST);
    if m.exists() {
        fs::remove_file(&m).map_err(|e| CliError::io(&m, e))?;
    }
    Ok(dir)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("value serializes");
    fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))
}

fn required<'a>(value: &'a Option<PathBuf>, what: &str) -> Result<&'a PathBuf, CliError> {
    value
        .as_ref()
        .ok_or_else(|| CliError::invalid(format!("no {what} given (config key or --{what})")))
}

pub fn ingest(cfg: &RunConfig) -> Result<Manifest, CliError> {
    let units_path = required(&cfg.units, "units")?;
    let offices_path = required(&cfg.offices, "offices")?;
    let mut opts = LoadOptions::new(&cfg.id_key, &cfg.pop_key);
    opts.name_key = cfg.name_key.clone();
    let set = load_units(units_path, &opts)?;
    let offices = load_post_offices(offices_path, &set)?;
    let mut geo = Geography::new(set.units.clone(), DEFAULT_ADJACENCY_TOL)?;
    if let Some(adj) = &cfg.adjacency {
        let graph = load_adjacency_csv(adj, geo.units())?;
        geo = geo.with_adjacency(graph)?;
    }

    let dir = stage_dir(&cfg.out, "ingest")?;
    write_units(dir.join("units.geojson"), &set)?;
    write_offices_json(dir.join("offices.json"), &offices)?;
    write_adjacency_csv(dir.join("adjacency.csv"), geo.adjacency(), geo.units())?;

    let isolated: Vec<&str> = geo.adjacency().isolated().map(|u| geo.units()[u].id.as_str()).collect();
    let adjacency = if geo.has_external_adjacency() { "external" } else { "computed" };
    let summary = json!({
        "units": geo.len(),
        "offices": offices.len(),
        "total_population": geo.total_population(),
        "adjacency": adjacency,
        "adjacency_edges": geo.adjacency().edge_count(),
        "isolated_units": isolated,
        "projection": set.projection,
    });
    let files = ["ingest/units.geojson", "ingest/offices.json", "ingest/adjacency.csv"].map(String::from);
    let m = manifest::write(&cfg.out, "ingest", &[], &files, summary)?;
    println!(
        "ingest: {} units, {} offices, population {}, adjacency {} ({} edges)",
        geo.len(),
        offices.len(),
        geo.total_population(),
        adjacency,
        geo.adjacency().edge_count()
    );
    Ok(m)
}

struct Inputs {
    geo: Geography,
    offices: Vec<PostOffice>,
}

fn load_ingest(out: &Path) -> Result<Inputs, CliError> {
    let m = manifest::verify(out, "ingest")?;
    let set = read_units(out.join("ingest/units.geojson"))?;
    let offices = read_offices_json(out.join("ingest/offices.json"))?;
    let mut geo = Geography::new(set.units, DEFAULT_ADJACENCY_TOL)?;
    if m.summary["adjacency"] == "external" {
        let graph = load_adjacency_csv(out.join("ingest/adjacency.csv"), geo.units())?;
        geo = geo.with_adjacency(graph)?;
    }
    Ok(Inputs { geo, offices })
}

fn load_network(out: &Path) -> Result<PostalNetwork, CliError> {
    manifest::verify(out, "network")?;
    Ok(PostalNetwork::read(out.join("network/network.json"))?)
}

pub fn network(cfg: &RunConfig) -> Result<Manifest, CliError> {
    let inputs = load_ingest(&cfg.out)?;
    let points: Vec<Point> = inputs.offices.iter().map(|o| o.xy).collect();
    let diagram = h0_persistence(&points)?;
    let epsilon = epsilon_from_percentile(&diagram, cfg.percentile)?;
    let net = build_network(&inputs.offices, epsilon)?;

    let dir = stage_dir(&cfg.out, "network")?;
    write_json(&dir.join("persistence.json"), &diagram)?;
    net.write(dir.join("network.json"))?;
    let summary = json!({
        "percentile": cfg.percentile,
        "epsilon": epsilon,
        "nodes": net.node_count(),
        "edges": net.edge_count(),
        "components": net.components(),
    });
    let files = ["network/persistence.json", "network/network.json"].map(String::from);
    let m = manifest::write(&cfg.out, "network", &["ingest"], &files, summary)?;
    println!(
        "network: {} nodes, {} edges, epsilon {:.3} mi (p = {})",
        net.node_count(),
        net.edge_count(),
        epsilon,
        cfg.percentile
    );
    Ok(m)
}

/// The reference compactness: an explicit value wins, else the reference
/// plan's minimum Polsby-Popper score.
fn pp_min_ref(cfg: &RunConfig, geo: &Geography) -> Result<f64, CliError> {
    if let Some(p) = cfg.pp_min_ref {
        return Ok(p);
    }
    let path = cfg.reference_plan.as_ref().ok_or_else(|| {
        CliError::invalid("the compactness reference needs `reference_plan` or `pp_min_ref`")
    })?;
    let plan = Plan::read(path, geo)?;
    Ok(compute_stats(&plan, geo, None)?.min_pp)
}

pub fn seed(cfg: &RunConfig) -> Result<Manifest, CliError> {
    let Inputs { geo, .. } = load_ingest(&cfg.out)?;
    let n = match cfg.districts {
        Some(n) => n,
        None => seats(geo.total_population(), cfg.us_population)?,
    };
    if n == 0 || n > geo.len() {
        return Err(CliError::invalid(format!("cannot make {n} districts from {} units", geo.len())));
    }
    let pp_ref = pp_min_ref(cfg, &geo)?;
    let adm = cfg.admissibility(pp_ref);

    let mut rng = substream(cfg.seed, "kmeans", 0);
    let (kplan, kstate) = kmeans_plan(&geo, n, &mut rng)?;
    let keval = evaluate(&kplan, &geo, &adm)?;
    let rcfg = RebalanceConfig {
        admissibility: adm,
        max_iter: cfg.max_iter,
        restarts: cfg.restarts,
        seed: cfg.seed,
        sampling: cfg.sampling,
    };
    let outcome = srkmeans(&kplan, &geo, &rcfg)?;

    let dir = stage_dir(&cfg.out, "seed")?;
    kplan.write(dir.join("kmeans_plan.json"), &geo)?;
    outcome.plan.write(dir.join("rebalanced_plan.json"), &geo)?;
    let report = ConvergenceReport::from(&outcome);
    write_json(&dir.join("convergence.json"), &report)?;
    let summary = json!({
        "districts": n,
        "pp_min_ref": pp_ref,
        "theta": cfg.theta,
        "kappa": cfg.kappa,
        "kmeans_objective": kstate.objective,
        "kmeans_deviations": keval.stats.deviations,
        "kmeans_min_pp": keval.stats.min_pp,
        "converged": outcome.converged,
        "iterations": outcome.iterations,
        "attempt": outcome.attempt,
        "final_deviations": outcome.final_deviations,
        "min_pp": outcome.min_pp,
    });
    let files = ["seed/kmeans_plan.json", "seed/rebalanced_plan.json", "seed/convergence.json"].map(String::from);
    let m = manifest::write(&cfg.out, "seed", &["ingest"], &files, summary)?;
    let pct = |v: &[f64]| v.iter().map(|d| format!("{:+.2}%", d * 100.0)).collect::<Vec<_>>().join(" ");
    println!("seed: {n} districts, k-means deviations {}", pct(&keval.stats.deviations));
    println!(
        "seed: rebalancing {} after {} iterations, deviations {}, min PP {:.3} (floor {:.3})",
        if outcome.converged { "converged" } else { "did not converge" },
        outcome.iterations,
        pct(&outcome.final_deviations),
        outcome.min_pp,
        adm.pp_floor()
    );
    if !outcome.converged {
        return Err(CliError::NotConverged(format!(
            "rebalancing did not reach an admissible plan in {} x {} iterations",
            cfg.restarts, cfg.max_iter
        )));
    }
    Ok(m)
}

/// Checkpoint plus the history length it corresponds to.
#[derive(Debug, Serialize, Deserialize)]
struct CheckpointFile {
    chain: ChainCheckpoint,
    history_bytes: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct ChainSummary {
    accepted_count: u64,
    min_cut_edges: usize,
    best_plan_path: String,
    initial_cut_edges: usize,
    iterations: u64,
}

struct ChainFiles {
    history: String,
    checkpoint: String,
    best_plan: String,
}

impl ChainFiles {
    fn new(index: usize, chains: usize) -> Self {
        let suffix = if chains == 1 { String::new() } else { format!("-{index}") };
        ChainFiles {
            history: format!("mcmc/history{suffix}.jsonl"),
            checkpoint: format!("mcmc/checkpoint{suffix}.json"),
            best_plan: format!("mcmc/best_plan{suffix}.json"),
        }
    }
}

enum ChainEnd {
    Finished(ChainSummary),
    Halted(u64),
}

fn write_checkpoint(path: &Path, ck: &CheckpointFile) -> Result<(), CliError> {
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, serde_json::to_vec(ck).expect("checkpoint serializes")).map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

fn run_one_chain(
    cfg: &RunConfig,
    chain_cfg: ChainConfig,
    files: &ChainFiles,
    initial: &Plan,
    geo: &Geography,
    counter: &CutEdgeCounter,
) -> Result<ChainEnd, CliError> {
    let history_path = cfg.out.join(&files.history);
    let ck_path = cfg.out.join(&files.checkpoint);
    let io = |p: &Path| {
        let p = p.to_path_buf();
        move |e| CliError::io(&p, e)
    };

    let (mut chain, file, mut bytes) = if cfg.resume && ck_path.exists() {
        let ck: CheckpointFile = read_json(&ck_path)?;
        if ck.chain.config != chain_cfg {
            return Err(CliError::invalid(format!(
                "{} was written with a different chain configuration",
                ck_path.display()
            )));
        }
        let f = OpenOptions::new().write(true).open(&history_path).map_err(io(&history_path))?;
        // drop records written after the checkpoint; they are regenerated
        f.set_len(ck.history_bytes).map_err(io(&history_path))?;
        let mut f = f;
        std::io::Seek::seek(&mut f, std::io::SeekFrom::End(0)).map_err(io(&history_path))?;
        log::info!("resuming {} at iteration {}", files.history, ck.chain.iteration);
        (Chain::resume(ck.chain, geo, counter)?, f, ck.history_bytes)
    } else {
        let f = File::create(&history_path).map_err(io(&history_path))?;
        (Chain::new(initial.clone(), chain_cfg, geo, counter)?, f, 0)
    };

    let mut w = BufWriter::new(file);
    while !chain.is_done() {
        if cfg.halt_after.is_some_and(|h| chain.iteration() >= h) {
            w.flush().map_err(io(&history_path))?;
            return Ok(ChainEnd::Halted(chain.iteration()));
        }
        if let Some(sample) = chain.step()? {
            let line = serde_json::to_string(&sample).expect("sample serializes") + "\n";
            w.write_all(line.as_bytes()).map_err(io(&history_path))?;
            bytes += line.len() as u64;
        }
        if chain.iteration() % CHECKPOINT_EVERY == 0 && !chain.is_done() {
            w.flush().map_err(io(&history_path))?;
            write_checkpoint(
                &ck_path,
                &CheckpointFile {
                    chain: chain.checkpoint(),
                    history_bytes: bytes,
                },
            )?;
        }
    }
    let summary = ChainSummary {
        accepted_count: chain.accepted_count(),
        min_cut_edges: chain.min_cut_edges(),
        best_plan_path: Path::new(&files.best_plan)
            .file_name()
            .unwrap()
            .to_string_lossy()
            .into_owned(),
        initial_cut_edges: chain.initial_cut_edges(),
        iterations: chain.iteration(),
    };
    let line = serde_json::to_string(&summary).expect("summary serializes") + "\n";
    w.write_all(line.as_bytes()).map_err(io(&history_path))?;
    w.flush().map_err(io(&history_path))?;
    chain.best_plan().write(cfg.out.join(&files.best_plan), geo)?;
    if ck_path.exists() {
        fs::remove_file(&ck_path).map_err(io(&ck_path))?;
    }
    Ok(ChainEnd::Finished(summary))
}

pub fn mcmc(cfg: &RunConfig) -> Result<Option<Manifest>, CliError> {
    let Inputs { geo, offices } = load_ingest(&cfg.out)?;
    let net = load_network(&cfg.out)?;
    let seed_m = manifest::verify(&cfg.out, "seed")?;
    let pp_ref = seed_m.summary["pp_min_ref"]
        .as_f64()
        .ok_or_else(|| CliError::invalid("seed manifest lacks pp_min_ref"))?;
    let adm = cfg.admissibility(pp_ref);
    let counter = CutEdgeCounter::new(&net, &offices, &geo)?;
    let initial = Plan::read(cfg.out.join("seed/rebalanced_plan.json"), &geo)?;

    let dir = cfg.out.join("mcmc");
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let m_path = dir.join(MANIFEST);
    if m_path.exists() {
        fs::remove_file(&m_path).map_err(|e| CliError::io(&m_path, e))?;
    }

    let results: Vec<(ChainFiles, Result<ChainEnd, CliError>)> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..cfg.chains)
            .map(|c| {
                let files = ChainFiles::new(c, cfg.chains);
                let mut chain_cfg = ChainConfig::new(cfg.iterations, adm, cfg.seed);
                chain_cfg.burn_in_rate = cfg.burn_in_rate;
                chain_cfg.chain_index = c as u64;
                let (initial, geo, counter) = (&initial, &geo, &counter);
                s.spawn(move || {
                    let r = run_one_chain(cfg, chain_cfg, &files, initial, geo, counter);
                    (files, r)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("chain thread panicked")).collect()
    });

    let mut files = Vec::new();
    let mut chains = Vec::new();
    let mut halted = None;
    for (f, r) in results {
        match r? {
            ChainEnd::Finished(s) => {
                println!(
                    "mcmc: {} accepted {} of {} proposals, min cut edges {} (seed plan {})",
                    f.history, s.accepted_count, s.iterations, s.min_cut_edges, s.initial_cut_edges
                );
                chains.push(json!({
                    "history": f.history,
                    "best_plan": f.best_plan,
                    "accepted_count": s.accepted_count,
                    "min_cut_edges": s.min_cut_edges,
                    "initial_cut_edges": s.initial_cut_edges,
                }));
                files.push(f.history);
                files.push(f.best_plan);
            }
            ChainEnd::Halted(i) => halted = Some(i),
        }
    }
    if let Some(i) = halted {
        println!("mcmc: halted at iteration {i}; rerun with --resume to continue");
        return Ok(None);
    }
    let summary = json!({
        "iterations": cfg.iterations,
        "burn_in_rate": cfg.burn_in_rate,
        "theta": cfg.theta,
        "kappa": cfg.kappa,
        "pp_min_ref": pp_ref,
        "seed": cfg.seed,
        "chains": chains,
    });
    Ok(Some(manifest::write(&cfg.out, "mcmc", &["ingest", "network", "seed"], &files, summary)?))
}

/// Recorded samples of one history stream; the summary line is skipped.
pub fn read_history(path: &Path) -> Result<Vec<Sample>, CliError> {
    let f = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| CliError::io(path, e))?;
        let v: Value = serde_json::from_str(&line)
            .map_err(|e| CliError::invalid(format!("{}:{}: {e}", path.display(), i + 1)))?;
        if v.get("iteration").is_some() {
            out.push(
                serde_json::from_value(v)
                    .map_err(|e| CliError::invalid(format!("{}:{}: {e}", path.display(), i + 1)))?,
            );
        }
    }
    Ok(out)
}

fn reference_cut_edges(cfg: &RunConfig) -> Result<usize, CliError> {
    if let Some(n) = cfg.reference_cut_edges {
        return Ok(n);
    }
    let path = cfg.reference_plan.as_ref().ok_or_else(|| {
        CliError::invalid("analysis needs a reference: `reference_plan` or --reference-cut-edges")
    })?;
    let Inputs { geo, offices } = load_ingest(&cfg.out)?;
    let net = load_network(&cfg.out)?;
    let plan = Plan::read(path, &geo)?;
    Ok(count_cut_edges(&plan, &net, &offices, &geo)?)
}

#[derive(Debug, Deserialize)]
struct ModelFile {
    weights: Vec<f64>,
    means: Vec<f64>,
    variances: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct NormalSummary {
    #[serde(flatten)]
    fit: NormalFit,
    /// Probability of at least the reference cut-edge count.
    p_value: f64,
}

fn tsv(path: &Path, header: &str, rows: impl Iterator<Item = String>) -> Result<(), CliError> {
    let mut text = String::from(header);
    text.push('\n');
    for r in rows {
        text.push_str(&r);
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn analyze(cfg: &RunConfig) -> Result<Manifest, CliError> {
    let x_ref = reference_cut_edges(cfg)?;
    let mut warnings: Vec<String> = Vec::new();

    let history: Option<(Vec<Sample>, usize)> = match manifest::verify(&cfg.out, "mcmc") {
        Ok(m) => {
            let mut all = Vec::new();
            let chains = m.summary["chains"].as_array().cloned().unwrap_or_default();
            for c in &chains {
                let rel = c["history"].as_str().unwrap_or_default();
                all.extend(read_history(&cfg.out.join(rel))?);
            }
            Some((all, chains.len()))
        }
        Err(e) if cfg.model_json.is_some() => {
            log::info!("no usable chain history ({e}); evaluating the given model only");
            None
        }
        Err(e) => return Err(e),
    };

    let dir = stage_dir(&cfg.out, "analysis")?;
    let mut files = vec!["analysis/report.json".to_string()];
    let mut report = json!({ "reference_cut_edges": x_ref });
    let mut normal: Option<NormalFit> = None;
    let mut values: Vec<f64> = Vec::new();

    if let Some((samples, chains)) = &history {
        let present: Vec<Option<usize>> = samples.iter().map(|s| s.cut_edges).collect();
        values = present.iter().flatten().map(|&c| c as f64).collect();
        report["chains"] = json!(chains);
        report["recorded"] = json!(samples.len());
        report["samples"] = json!(values.len());
        if values.is_empty() {
            return Err(CliError::invalid("chain history has no accepted samples"));
        }
        let series = trace_and_running_average(&present)?;
        tsv(
            &dir.join("trace.tsv"),
            "sample\tcut_edges\trunning_mean",
            series
                .trace
                .iter()
                .zip(&series.running_mean)
                .enumerate()
                .map(|(i, (t, m))| format!("{i}\t{t}\t{m}")),
        )?;
        files.push("analysis/trace.tsv".into());
        let bins = histogram(&values, 40);
        tsv(
            &dir.join("histogram.tsv"),
            "lo\thi\tcount\tdensity",
            bins.iter().map(|b| format!("{}\t{}\t{}\t{}", b.lo, b.hi, b.count, b.density)),
        )?;
        files.push("analysis/histogram.tsv".into());

        if values.len() >= 2 {
            let fit = fit_normal(&values)?;
            if fit.degenerate {
                warnings.push("every recorded sample has the same cut-edge count; mixture fit skipped".into());
            }
            report["normal"] = json!(NormalSummary {
                p_value: fit.p_value(x_ref as f64),
                fit: fit.clone(),
            });
            normal = Some(fit);
        } else {
            warnings.push("fewer than two samples; no fits".into());
        }
    }

    let model: Option<GmmModel> = if let Some(path) = &cfg.model_json {
        let f: ModelFile = read_json(path)?;
        report["model_source"] = json!(path.display().to_string());
        Some(GmmModel::from_parameters(f.weights, f.means, f.variances)?)
    } else if normal.as_ref().is_some_and(|n| !n.degenerate) {
        let k_max = cfg.k_max.min(values.len() / 2).max(1);
        let sel = select_k_bic(&values, k_max, cfg.seed)?;
        tsv(
            &dir.join("bic.tsv"),
            "k\tbic\tlog_likelihood",
            sel.curve.iter().map(|p| format!("{}\t{}\t{}", p.k, p.bic, p.log_likelihood)),
        )?;
        files.push("analysis/bic.tsv".into());
        report["bic"] = json!(sel.curve);
        report["selected_k"] = json!(sel.best_k);
        report["model_source"] = json!("fitted");
        let best = sel.best_model().clone();
        if best.floor_active {
            warnings.push("a mixture component sits at the variance floor".into());
        }
        Some(best)
    } else {
        None
    };

    if let Some(m) = &model {
        let p = gmm_cdf(m, x_ref as f64);
        report["model"] = json!(m);
        report["components_by_mean"] = json!(m
            .components_by_mean()
            .iter()
            .map(|(w, mu, v)| json!({"weight": w, "mean": mu, "variance": v}))
            .collect::<Vec<_>>());
        report["cumulative_probability"] = json!(p);
        println!("analyze: P(cut edges < {x_ref}) = {p:.4} under the {}-component mixture", m.k());
    }
    if !values.is_empty() || model.is_some() {
        let (lo, hi) = density_range(&values, model.as_ref(), x_ref as f64);
        tsv(
            &dir.join("density.tsv"),
            "x\tmixture\tnormal",
            (0..=200).map(|i| {
                let x = lo + (hi - lo) * i as f64 / 200.0;
                let mix = model.as_ref().map_or(f64::NAN, |m| m.pdf(x));
                let nor = normal.as_ref().filter(|n| !n.degenerate).map_or(f64::NAN, |n| {
                    (-(x - n.mean).powi(2) / (2.0 * n.variance)).exp()
                        / (2.0 * std::f64::consts::PI * n.variance).sqrt()
                });
                format!("{x}\t{mix}\t{nor}")
            }),
        )?;
        files.push("analysis/density.tsv".into());
    }
    if let Some(n) = &normal {
        println!(
            "analyze: normal fit mean {:.2}, sd {:.2}, P(cut edges >= {x_ref}) = {:.4}",
            n.mean,
            n.variance.sqrt(),
            n.p_value(x_ref as f64)
        );
    }
    for w in &warnings {
        log::warn!("{w}");
        println!("analyze: warning: {w}");
    }
    report["warnings"] = json!(warnings);
    write_json(&dir.join("report.json"), &report)?;
    files.sort();
    let inputs: &[&str] = if history.is_some() { &["mcmc"] } else { &[] };
    manifest::write(&cfg.out, "analysis", inputs, &files, report)
}

fn density_range(values: &[f64], model: Option<&GmmModel>, x_ref: f64) -> (f64, f64) {
    let mut lo = x_ref;
    let mut hi = x_ref;
    for &v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if let Some(m) = model {
        for j in 0..m.k() {
            let sd = m.variances[j].sqrt();
            lo = lo.min(m.means[j] - 4.0 * sd);
            hi = hi.max(m.means[j] + 4.0 * sd);
        }
    }
    if hi <= lo {
        (lo - 1.0, hi + 1.0)
    } else {
        (lo, hi)
    }
}

/// Runs every stage, then copies the results a reader needs into `report/`.
pub fn report(cfg: &RunConfig) -> Result<(), CliError> {
    ingest(cfg)?;
    network(cfg)?;
    seed(cfg)?;
    if mcmc(cfg)?.is_none() {
        return Ok(());
    }
    analyze(cfg)?;
    let dir = cfg.out.join("report");
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let mut copied = Vec::new();
    for stage in ["ingest", "network", "seed", "mcmc", "analysis"] {
        let m: Manifest = read_json(&cfg.out.join(stage).join(MANIFEST))?;
        let keep = m.files.keys().filter(|f| {
            !f.ends_with(".jsonl") && !f.ends_with("units.geojson") && !f.ends_with("offices.json")
        });
        for rel in keep {
            let name = rel.replace('/', "_");
            let from = cfg.out.join(rel);
            fs::copy(&from, dir.join(&name)).map_err(|e| CliError::io(&from, e))?;
            copied.push(name);
        }
        fs::copy(cfg.out.join(stage).join(MANIFEST), dir.join(format!("{stage}_manifest.json")))
            .map_err(|e| CliError::io(&dir, e))?;
    }
    println!("report: {} files in {}", copied.len() + 5, dir.display());
    Ok(())
}
