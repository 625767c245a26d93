//! Acceptance checks, one PASS/FAIL line each.
//!
//! Criteria 4-7 run on the Iowa inputs in `data/iowa` (override with
//! `POSTCUT_IOWA_DIR`): `counties.geojson` with `GEOID`/`POP` properties,
//! `post_offices.csv`, and optionally `official_plan.json`. Their outcome
//! depends on which data sources were used, so they are printed but do not
//! fail the test run; missing inputs print FAIL with the reason.

use std::io::Write;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use postcut_core::geometry::{polygon_area, polygon_perimeter};
use postcut_core::ingest::{parse_post_offices, parse_units, LoadOptions, PostOffice};
use postcut_core::mcmc::{run_chain, Chain, ChainConfig};
use postcut_core::plan::{count_cut_edges, evaluate, seats, Admissibility, CutEdgeCounter, Plan};
use postcut_core::rng::substream;
use postcut_core::seeding::{kmeans_plan, srkmeans, weighted_kmeans, RebalanceConfig};
use postcut_core::stats::{gmm_cdf, select_k_bic, GmmModel};
use postcut_core::tda::{build_network, epsilon_from_percentile, h0_persistence};
use postcut_core::{polsby_popper, DistrictGeometry, Geography, Point, PostalNetwork};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde_json::Value;

const WEIGHTS: [f64; 3] = [0.38466576, 0.18806542, 0.42726882];
const MEANS: [f64; 3] = [498.37, 605.86, 430.81];
const VARIANCES: [f64; 3] = [1013.28, 2047.77, 1018.74];
const OFFICIAL_MIN_PP: f64 = 0.26;
const OFFICIAL_CUT_EDGES: f64 = 597.0;
const IOWA_SEATS: usize = 4;

enum Verdict {
    Pass(String),
    Fail(String),
    /// Inputs are missing; reported as FAIL but not asserted.
    Blocked(String),
    /// Out of band on an informational check; reported, not asserted.
    Soft(String),
}

struct Report {
    lines: Vec<(u32, bool, bool)>,
}

impl Report {
    fn record(&mut self, n: u32, title: &str, limit: Duration, run: impl FnOnce() -> Verdict) {
        self.run(n, title, limit, true, run)
    }

    /// Prints the verdict without asserting it.
    fn report(&mut self, n: u32, title: &str, limit: Duration, run: impl FnOnce() -> Verdict) {
        self.run(n, title, limit, false, run)
    }

    fn run(&mut self, n: u32, title: &str, limit: Duration, assert: bool, run: impl FnOnce() -> Verdict) {
        let start = Instant::now();
        let verdict = run();
        let took = start.elapsed();
        let slow = took > limit;
        let (ok, asserted, detail) = match verdict {
            Verdict::Pass(d) if slow => (false, assert, format!("{d}; over the {limit:?} budget")),
            Verdict::Pass(d) => (true, assert, d),
            Verdict::Fail(d) => (false, assert, d),
            Verdict::Blocked(d) => (false, false, format!("not run: {d}")),
            Verdict::Soft(d) => (false, false, d),
        };
        // written to the raw handle so the line shows without --nocapture
        let line = format!(
            "criterion {n:>2} {}: {title}: {detail} [{:.2?}]\n",
            if ok { "PASS" } else { "FAIL" },
            took
        );
        std::io::stderr().write_all(line.as_bytes()).unwrap();
        self.lines.push((n, ok, asserted));
    }
}

fn published() -> GmmModel {
    GmmModel::from_parameters(WEIGHTS.to_vec(), MEANS.to_vec(), VARIANCES.to_vec()).unwrap()
}

fn prim_lengths(points: &[Point]) -> Vec<f64> {
    let n = points.len();
    let mut best = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    let mut out = Vec::with_capacity(n.saturating_sub(1));
    best[0] = 0.0;
    for step in 0..n {
        let u = (0..n)
            .filter(|&i| !done[i])
            .min_by(|&a, &b| best[a].total_cmp(&best[b]))
            .unwrap();
        done[u] = true;
        if step > 0 {
            out.push(best[u]);
        }
        for v in 0..n {
            if !done[v] {
                best[v] = best[v].min(points[u].distance(points[v]));
            }
        }
    }
    out
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

fn criterion_1() -> Verdict {
    let p = gmm_cdf(&published(), 597.0);
    let detail = format!("F(597) = {p:.6}, expected 0.8910 +- 0.0005");
    if (p - 0.8910).abs() <= 0.0005 {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

fn criterion_2() -> Verdict {
    match seats(3_203_345, 334_994_511) {
        Ok(4) => Verdict::Pass("Iowa gets 4 seats".into()),
        other => Verdict::Fail(format!("got {other:?}")),
    }
}

fn criterion_3() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..50 {
        let n = rng.random_range(2..=500);
        let points: Vec<Point> = (0..n)
            .map(|_| Point::new(rng.random_range(0.0..200.0), rng.random_range(0.0..200.0)))
            .collect();
        let deaths = h0_persistence(&points).unwrap().finite_persistence();
        if sorted(deaths) != sorted(prim_lengths(&points)) {
            return Verdict::Fail(format!("set {case} (n = {n}) differs from Prim"));
        }
    }
    Verdict::Pass("50 sets match Prim exactly".into())
}

fn criterion_8() -> Verdict {
    let m = published();
    let comps: Vec<Normal<f64>> = (0..3)
        .map(|j| Normal::new(MEANS[j], VARIANCES[j].sqrt()).unwrap())
        .collect();
    let mut picked_three = 0;
    let mut worst_mean_error: f64 = 0.0;
    let mut ks = Vec::new();
    for run in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + run);
        let samples: Vec<f64> = (0..10_000)
            .map(|_| {
                let u: f64 = rng.random();
                let j = if u < m.weights[0] {
                    0
                } else if u < m.weights[0] + m.weights[1] {
                    1
                } else {
                    2
                };
                comps[j].sample(&mut rng)
            })
            .collect();
        let sel = select_k_bic(&samples, 6, run).unwrap();
        ks.push(sel.best_k);
        if sel.best_k == 3 {
            picked_three += 1;
            let got = sorted(sel.best_model().means.clone());
            let want = sorted(MEANS.to_vec());
            for (g, w) in got.iter().zip(&want) {
                worst_mean_error = worst_mean_error.max((g - w).abs());
            }
        }
    }
    let detail = format!("K = 3 in {picked_three}/10 runs (K = {ks:?}), worst mean error {worst_mean_error:.2}");
    if picked_three >= 8 && worst_mean_error <= 15.0 {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

fn pp_of(ring: Vec<Point>) -> f64 {
    let rings = vec![ring];
    let g = DistrictGeometry {
        district: 0,
        area: polygon_area(&rings).unwrap(),
        perimeter: polygon_perimeter(&rings).unwrap(),
        part_count: 1,
    };
    polsby_popper(&g).unwrap()
}

fn rect(w: f64, h: f64, s: f64) -> Vec<Point> {
    [(0.0, 0.0), (w, 0.0), (w, h), (0.0, h), (0.0, 0.0)]
        .iter()
        .map(|&(x, y)| Point::new(x * s, y * s))
        .collect()
}

fn criterion_9() -> Verdict {
    let disc: Vec<Point> = (0..=4096)
        .map(|i| {
            let t = std::f64::consts::TAU * (i % 4096) as f64 / 4096.0;
            Point::new(t.cos(), t.sin())
        })
        .collect();
    let pi = std::f64::consts::PI;
    let cases = [
        ("disc", pp_of(disc.clone()), 1.0, 1e-3),
        ("unit square", pp_of(rect(1.0, 1.0, 1.0)), pi / 4.0, 1e-12),
        ("1x2 rectangle", pp_of(rect(1.0, 2.0, 1.0)), 8.0 * pi / 36.0, 1e-12),
    ];
    for (name, got, want, tol) in cases {
        if (got - want).abs() > tol {
            return Verdict::Fail(format!("{name}: {got} vs {want}"));
        }
    }
    for s in [1e-3, 7.5, 1e4] {
        let scaled: Vec<Point> = disc.iter().map(|p| Point::new(p.x * s, p.y * s)).collect();
        let pairs = [
            (pp_of(disc.clone()), pp_of(scaled)),
            (pp_of(rect(1.0, 2.0, 1.0)), pp_of(rect(1.0, 2.0, s))),
        ];
        for (a, b) in pairs {
            if ((a - b) / a).abs() > 1e-9 {
                return Verdict::Fail(format!("scale {s}: {a} vs {b}"));
            }
        }
    }
    Verdict::Pass("disc, square, rectangle and scale invariance hold".into())
}

fn criterion_10() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut iterations = 0;
    for case in 0..100u64 {
        let n = rng.random_range(10..300);
        let k = rng.random_range(1..=8.min(n));
        let points: Vec<Point> = (0..n)
            .map(|_| Point::new(rng.random_range(0.0..100.0), rng.random_range(0.0..100.0)))
            .collect();
        let weights: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..1000.0)).collect();
        let s = weighted_kmeans(&points, &weights, k, &mut ChaCha8Rng::seed_from_u64(case)).unwrap();
        iterations += s.trace.len();
        // rounding in the center update can move the objective by a few ulps
        if let Some(w) = s.trace.windows(2).find(|w| w[1] > w[0] * (1.0 + 1e-12)) {
            return Verdict::Fail(format!("instance {case}: {} -> {}", w[0], w[1]));
        }
    }
    Verdict::Pass(format!("100 instances, {iterations} objective values, never increasing"))
}

struct Iowa {
    geo: Option<Geography>,
    offices: Vec<PostOffice>,
    dir: PathBuf,
}

fn iowa_dir() -> PathBuf {
    std::env::var_os("POSTCUT_IOWA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/iowa"))
}

/// Loads the Iowa inputs. Units without populations still give office
/// positions (the projection depends on geometry only), but no geography.
fn load_iowa() -> Result<Iowa, String> {
    let dir = iowa_dir();
    let units_path = dir.join("counties.geojson");
    let text = std::fs::read_to_string(&units_path).map_err(|e| format!("{}: {e}", units_path.display()))?;
    let mut doc: Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let features = doc["features"].as_array_mut().ok_or("no features")?;
    let has_pop = features.iter().all(|f| f["properties"].get("POP").is_some());
    if !has_pop {
        for f in features.iter_mut() {
            f["properties"]["POP"] = Value::from(0);
        }
    }
    let set = parse_units(&doc, &LoadOptions::new("GEOID", "POP")).map_err(|e| e.to_string())?;
    let offices_path = dir.join("post_offices.csv");
    let text = std::fs::read_to_string(&offices_path).map_err(|e| format!("{}: {e}", offices_path.display()))?;
    let offices = parse_post_offices(&text, &set).map_err(|e| e.to_string())?;
    let geo = if has_pop {
        Some(Geography::new(set.units, 1e-6).map_err(|e| e.to_string())?)
    } else {
        None
    };
    Ok(Iowa { geo, offices, dir })
}

fn network_at(offices: &[PostOffice], p: f64) -> (f64, PostalNetwork) {
    let points: Vec<Point> = offices.iter().map(|o| o.xy).collect();
    let diagram = h0_persistence(&points).unwrap();
    let eps = epsilon_from_percentile(&diagram, p).unwrap();
    (eps, build_network(offices, eps).unwrap())
}

fn criterion_4(iowa: &Result<Iowa, String>) -> Verdict {
    let iowa = match iowa {
        Ok(i) => i,
        Err(e) => return Verdict::Blocked(e.clone()),
    };
    let points: Vec<Point> = iowa.offices.iter().map(|o| o.xy).collect();
    let diagram = h0_persistence(&points).unwrap();
    let e100 = epsilon_from_percentile(&diagram, 100.0).unwrap();
    let e90 = epsilon_from_percentile(&diagram, 90.0).unwrap();
    let detail = format!(
        "{} offices, eps(100) = {e100:.2} mi, eps(90) = {e90:.2} mi; expected [13, 15] and [7, 9]",
        iowa.offices.len()
    );
    if (13.0..=15.0).contains(&e100) && (7.0..=9.0).contains(&e90) {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

fn iowa_adm() -> Admissibility {
    Admissibility {
        theta: 0.05,
        kappa: 0.05,
        pp_min_ref: OFFICIAL_MIN_PP,
    }
}

fn populated(iowa: &Result<Iowa, String>) -> Result<(&Geography, &[PostOffice]), String> {
    let iowa = iowa.as_ref().map_err(Clone::clone)?;
    match &iowa.geo {
        Some(g) => Ok((g, &iowa.offices)),
        None => Err(format!("{} has no POP property", iowa.dir.join("counties.geojson").display())),
    }
}

fn criterion_5(iowa: &Result<Iowa, String>, seed_plan: &mut Option<Plan>) -> Verdict {
    let geo = match populated(iowa) {
        Ok((g, _)) => g,
        Err(e) => return Verdict::Blocked(e),
    };
    let adm = iowa_adm();
    let mut converged = 0;
    let mut raw_violations = 0;
    let mut notes = Vec::new();
    for attempt in 0..10u64 {
        let (plan, _) = kmeans_plan(geo, IOWA_SEATS, &mut substream(attempt, "kmeans", 0)).unwrap();
        let raw = evaluate(&plan, geo, &adm).unwrap();
        if raw.stats.max_abs_deviation() > adm.theta {
            raw_violations += 1;
        }
        let out = srkmeans(&plan, geo, &RebalanceConfig::new(adm, attempt)).unwrap();
        let ok = out.converged
            && out.final_deviations.iter().all(|d| d.abs() <= 0.05)
            && out.min_pp >= 0.95 * OFFICIAL_MIN_PP;
        if ok {
            converged += 1;
            seed_plan.get_or_insert(out.plan.clone());
        } else {
            notes.push(format!("attempt {attempt}: {:?}, min PP {:.3}", out.final_deviations, out.min_pp));
        }
    }
    let detail = format!(
        "{converged}/10 converged; raw k-means violated theta in {raw_violations}/10{}",
        if notes.is_empty() { String::new() } else { format!("; {}", notes.join("; ")) }
    );
    if converged >= 8 {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

fn criterion_6(iowa: &Result<Iowa, String>, seed_plan: &Option<Plan>) -> Verdict {
    let (geo, offices) = match populated(iowa) {
        Ok(x) => x,
        Err(e) => return Verdict::Blocked(e),
    };
    let Some(initial) = seed_plan else {
        return Verdict::Fail("no converged seed plan from the rebalancing criterion".into());
    };
    let adm = iowa_adm();
    let (_, net) = network_at(offices, 100.0);
    let counter = CutEdgeCounter::new(&net, offices, geo).unwrap();
    let cfg = ChainConfig::new(50_000, adm, 2024);
    let mut chain = Chain::new(initial.clone(), cfg, geo, &counter).unwrap();
    let mut pick = ChaCha8Rng::seed_from_u64(6);
    let (mut states_checked, mut counts_checked) = (0, 0);
    let mut samples = Vec::new();
    while !chain.is_done() {
        let sample = chain.step().unwrap();
        if pick.random::<f64>() < 0.01 {
            states_checked += 1;
            if !evaluate(chain.plan(), geo, &adm).unwrap().admissible {
                return Verdict::Fail(format!("adopted state at iteration {} is inadmissible", chain.iteration()));
            }
        }
        if let Some(s) = sample {
            if let Some(c) = s.cut_edges {
                if pick.random::<f64>() < 0.01 {
                    counts_checked += 1;
                    let brute = count_cut_edges(chain.plan(), &net, offices, geo).unwrap();
                    if brute != c {
                        return Verdict::Fail(format!("iteration {}: recorded {c}, recount {brute}", s.iteration));
                    }
                }
            }
            samples.push(s);
        }
    }
    let history = chain.into_history(samples);
    if history.min_cut_edges > history.initial_cut_edges {
        return Verdict::Fail("minimum exceeds the seed plan's count".into());
    }
    let first = serde_json::to_vec(&history.samples).unwrap();
    let again = run_chain(initial.clone(), &cfg, geo, &counter).unwrap();
    if serde_json::to_vec(&again.samples).unwrap() != first || again.best_plan != history.best_plan {
        return Verdict::Fail("rerun with the same seed differs".into());
    }
    let recorded = history.samples.len();
    let present = history.present().count();
    Verdict::Pass(format!(
        "{states_checked} states and {counts_checked} counts rechecked; min {} <= seed {}; rerun identical; \
         {present}/{recorded} recorded entries carry counts ({:.1}%)",
        history.min_cut_edges,
        history.initial_cut_edges,
        100.0 * present as f64 / recorded as f64
    ))
}

fn criterion_7(iowa: &Result<Iowa, String>) -> Verdict {
    let (geo, offices) = match populated(iowa) {
        Ok(x) => x,
        Err(e) => return Verdict::Blocked(e),
    };
    let path = iowa.as_ref().unwrap().dir.join("official_plan.json");
    let plan = match Plan::read(&path, geo) {
        Ok(p) => p,
        Err(e) => return Verdict::Blocked(e.to_string()),
    };
    let (_, net) = network_at(offices, 100.0);
    let c = count_cut_edges(&plan, &net, offices, geo).unwrap() as f64;
    let rel = (c - OFFICIAL_CUT_EDGES) / OFFICIAL_CUT_EDGES;
    let detail = format!("official plan cuts {c} edges, {:+.1}% from 597 (informational)", rel * 100.0);
    if rel.abs() <= 0.15 {
        Verdict::Pass(detail)
    } else {
        Verdict::Soft(detail)
    }
}

#[test]
fn acceptance() {
    let mut report = Report { lines: Vec::new() };
    let s = Duration::from_secs;
    report.record(1, "mixture CDF at 597", s(1), criterion_1);
    report.record(2, "apportionment", s(1), criterion_2);
    report.record(3, "persistence against Prim", s(10), criterion_3);
    let iowa = load_iowa();
    report.report(4, "Iowa epsilon bands", s(30), || criterion_4(&iowa));
    let mut seed_plan = None;
    report.report(5, "Iowa rebalancing", s(300), || criterion_5(&iowa, &mut seed_plan));
    report.report(6, "Iowa chain soundness", s(7200), || criterion_6(&iowa, &seed_plan));
    report.report(7, "Iowa official plan cut edges", s(60), || criterion_7(&iowa));
    report.record(8, "EM/BIC recovery", s(60), criterion_8);
    report.record(9, "Polsby-Popper geometry", s(1), criterion_9);
    report.record(10, "k-means monotonicity", s(10), criterion_10);

    let failed: Vec<u32> = report
        .lines
        .iter()
        .filter(|&&(_, ok, asserted)| !ok && asserted)
        .map(|&(n, _, _)| n)
        .collect();
    assert!(failed.is_empty(), "criteria failed: {failed:?}");
}
