//! The experiment registry: declared parameters and runners per subcommand.

use rayon::prelude::*;
use serde_json::json;
use std::f64::consts::{LN_2, SQRT_2};

use horolab_core::algapprox::{self, RegionMode, RegionParams};
use horolab_core::bestapprox::{self, SectionConfig};
use horolab_core::dirichlet::{self, EnsembleParams, EstimateMethod, ImprovabilityMethod};
use horolab_core::exact::Dyadic;
use horolab_core::flow::{FlowSpec, PolynomialCurve};
use horolab_core::kmtree;
use horolab_core::lattice::NormKind;
use horolab_core::rng::RngStream;
use horolab_core::stats;
use horolab_core::stochastic::{self, IntervalFamily, MartingaleSpec, PackingSource};
use horolab_core::{LabError, Result as LabResult};

use crate::config::{ExperimentConfig, ParamKind, ParamSpec};
use crate::report::{num, Acceptance, Outcome, Table};
use crate::HarnessError;

macro_rules! params {
    ($(($key:literal, $kind:ident, $default:literal, $help:literal)),* $(,)?) => {
        &[$(ParamSpec { key: $key, kind: ParamKind::$kind, default: $default, help: $help }),*]
    };
}

pub const NAMES: &[&str] = &[
    "dirichlet",
    "estimate-f",
    "bestapprox",
    "equidist",
    "algapprox",
    "kmtree",
    "stochastic",
    "unipotent-check",
    "selftest",
];

pub fn schema(name: &str) -> Option<&'static [ParamSpec]> {
    Some(match name {
        "dirichlet" => params![
            ("d", Int, "2", "degree of the moment curve"),
            ("mu", Vector, "0.5", "thresholds for the density profile"),
            ("samples", Int, "16", "random points s on the curve"),
            ("t_max", Real, "60", "orbit horizon"),
            ("t_step", Real, "0.05", "sampling step"),
            ("dani_dims", Vector, "1,2", "dimensions cycled through the consistency cases"),
            ("dani_mus", Vector, "0.3,0.5,0.8", "thresholds cycled through the consistency cases"),
            ("dani_cases", Int, "500", "number of consistency cases"),
            ("dani_n_max", Int, "500", "largest horizon N in the consistency cases"),
        ],
        "estimate-f" => params![
            ("d", Int, "2", "dimension"),
            ("mu", Real, "0.5", "threshold"),
            ("method", Str, "lebesgue", "lebesgue, curve (moment curve) or siegel"),
            ("samples", Int, "64", "ensemble size"),
            ("t_max", Real, "60", "orbit horizon"),
            ("t_step", Real, "0.05", "sampling step"),
            ("reference", Real, "-1", "value to compare the mean with; negative disables"),
            ("rel_tol", Real, "0.15", "relative tolerance against the reference"),
            ("max_std", Real, "-1", "bound on the spread of per-sample means; negative disables"),
        ],
        "bestapprox" => params![
            ("xi", Vector, "", "point to approximate; empty draws random points"),
            ("d", Int, "2", "dimension of random points"),
            ("points", Int, "1", "number of random points"),
            ("norm", Str, "sup", "sup or euclidean"),
            ("q_max", Int, "100000", "largest denominator"),
            ("r0", Real, "-1", "section radius; negative uses the default"),
            ("max_offset", Int, "5", "allowed number of initial disagreements"),
        ],
        "equidist" => params![
            ("points", Int, "700", "points per ensemble"),
            ("q_min", Int, "100", "smallest pooled denominator"),
            ("q_max", Int, "1000000", "largest denominator"),
            ("norm", Str, "sup", "sup or euclidean"),
            ("min_records", Int, "5000", "records required per ensemble"),
            ("ks_max", Real, "0.05", "bound on every KS statistic"),
        ],
        "algapprox" => params![
            ("d", Int, "2", "degree"),
            ("s", Real, "1.4132135623730951", "point on the line"),
            ("mu", Vector, "0.25", "thresholds"),
            ("t_max", Real, "10", "horizon"),
            ("t_step", Real, "0.05", "profile step"),
            ("eps", Real, "0.1", "audit tolerance"),
            ("audit_t_min", Real, "6", "first audited time"),
            ("audit_step", Real, "0.01", "audit step"),
        ],
        "kmtree" => params![
            ("instances", Int, "1", "random instances"),
            ("t_max", Real, "3", "largest flow time"),
            ("eps", Vector, "0.2,0.5", "thresholds for the bad set"),
            ("grid", Int, "10000", "grid points for the cover check"),
        ],
        "stochastic" => params![
            ("beta", Real, "0.5", "length scale"),
            ("gamma", Real, "4", "dilation factor"),
            ("n", Int, "10000", "levels per trial"),
            ("trials", Int, "100", "trials for both simulations"),
            ("freq_slack", Real, "0.05", "allowed excess over 1/gamma"),
            ("azuma_n", Int, "100000", "martingale length"),
            ("azuma_slack", Real, "0.1", "allowed excess over 1"),
            ("polys_per_degree", Int, "100", "random polynomials per degree"),
            ("dilation_cases", Int, "1000", "dilation cases"),
            ("sparse_configs", Int, "1000", "sparse cover configurations"),
        ],
        "unipotent-check" => params![
            ("samples", Int, "20", "random curve parameters"),
            ("t_max", Real, "2000", "final horizon"),
            ("t_early", Real, "200", "early horizon"),
            ("t_step", Real, "0.1", "sampling step"),
            ("shift", Real, "0.5", "unipotent shift"),
            ("max_discrepancy", Real, "0.05", "bound at the final horizon"),
        ],
        "selftest" => params![],
        _ => return None,
    })
}

pub fn run(cfg: &ExperimentConfig) -> Result<Outcome, HarnessError> {
    match cfg.experiment.as_str() {
        "dirichlet" => run_dirichlet(cfg),
        "estimate-f" => run_estimate_f(cfg),
        "bestapprox" => run_bestapprox(cfg),
        "equidist" => run_equidist(cfg),
        "algapprox" => run_algapprox(cfg),
        "kmtree" => run_kmtree(cfg),
        "stochastic" => run_stochastic(cfg),
        "unipotent-check" => run_unipotent(cfg),
        "selftest" => run_selftest(cfg),
        other => Err(crate::config::ConfigError::UnknownExperiment(other.into()).into()),
    }
}

fn norm(cfg: &ExperimentConfig) -> Result<NormKind, HarnessError> {
    match cfg.string("norm") {
        "sup" => Ok(NormKind::Sup),
        "euclidean" => Ok(NormKind::Euclidean),
        other => Err(LabError::InvalidParameter(format!("unknown norm {other}")).into()),
    }
}

fn flag(b: bool) -> String {
    (b as u8).to_string()
}

fn run_dirichlet(cfg: &ExperimentConfig) -> Result<Outcome, HarnessError> {
    let d = cfg.count("d")?;
    let params = EnsembleParams {
        samples: cfg.count("samples")?,
        t_max: cfg.real("t_max"),
        t_step: cfg.real("t_step"),
        seed: cfg.seed,
    };
    let method = EstimateMethod::CurveEnsemble(PolynomialCurve::moment(d)?);
    let mut out = Outcome {
        table: Table::new(&["s", "mu", "lower", "upper", "n_grid", "t_max"]),
        ..Default::default()
    };
    for &mu in cfg.vector("mu") {
        let mut rows: Vec<(f64, _)> = dirichlet::ensemble_profiles(d, mu, &method, &params)?
            .into_iter()
            .map(|(s, e)| (s[0].to_f64(), e))
            .collect();
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (s, e) in &rows {
            out.table.push(vec![num(*s), num(mu), num(e.lower), num(e.upper), e.n_samples.to_string(), num(params.t_max)]);
        }
        out.plots.push((format!("density_mu{mu}.dat"), rows.iter().map(|(s, e)| (*s, e.mean)).collect()));
        let means: Vec<f64> = rows.iter().map(|r| r.1.mean).collect();
        out.estimate(
            &format!("mu{mu}"),
            json!({
                "mean": stats::mean(&means),
                "std": stats::std_dev(&means),
                "ci_halfwidth": 1.96 * stats::std_dev(&means) / (means.len().max(1) as f64).sqrt(),
                "n_samples": means.len(),
            }),
        );
    }
    let (dani, agree, cases) = dani_consistency(cfg)?;
    out.extra_files.push(("dani.csv".into(), String::from_utf8(crate::report::csv_bytes(&dani)?).unwrap_or_default()));
    out.estimate("dani_agreements", agree);
    out.acceptance.push(Acceptance::new("dani_correspondence", agree == cases, format!("{agree}/{cases} cases agree")));
    Ok(out)
}

/// Improvability through the flow against the direct search, on random cases.
fn dani_consistency(cfg: &ExperimentConfig) -> Result<(Table, usize, usize), HarnessError> {
    let dims: Vec<usize> = cfg.vector("dani_dims").iter().map(|&d| d as usize).collect();
    let mus = cfg.vector("dani_mus").to_vec();
    let cases = cfg.count("dani_cases")?;
    let n_max = cfg.count("dani_n_max")?.max(1) as u64;
    if dims.is_empty() || mus.is_empty() || dims.iter().any(|&d| d == 0 || d > 2) {
        return Err(LabError::InvalidParameter("dani_dims must list values in {1, 2} and dani_mus must be nonempty".into()).into());
    }
    let rows: LabResult<Vec<_>> = (0..cases)
        .into_par_iter()
        .map(|i| {
            // Stream indices above 2^32 keep these draws apart from the curve samples.
            let mut rng = RngStream::new(cfg.seed, (1 << 32) + i as u64);
            let d = dims[i % dims.len()];
            let mu = mus[(i / dims.len()) % mus.len()];
            let xi: Vec<f64> = (0..d).map(|_| rng.uniform()).collect();
            let n = 1 + rng.below(n_max);
            let dynamical = dirichlet::improvable_at(&xi, n as f64, mu, ImprovabilityMethod::Dynamical)?;
            let direct = dirichlet::improvable_at(&xi, n as f64, mu, ImprovabilityMethod::Direct)?;
            Ok((d, mu, n, xi, dynamical, direct))
        })
        .collect();
    let mut table = Table::new(&["case", "d", "mu", "n", "xi1", "xi2", "dynamical", "direct"]);
    let mut agree = 0;
    for (i, (d, mu, n, xi, a, b)) in rows?.iter().enumerate() {
        agree += (a == b) as usize;
        table.push(vec![
            i.to_string(),
            d.to_string(),
            num(*mu),
            n.to_string(),
            num(xi[0]),
            xi.get(1).map_or(String::new(), |x| num(*x)),
            flag(*a),
            flag(*b),
        ]);
    }
    Ok((table, agree, cases))
}

fn run_estimate_f(cfg: &ExperimentConfig) -> Result<Outcome, HarnessError> {
    let d = cfg.count("d")?;
    let mu = cfg.real("mu");
    let method = match cfg.string("method") {
        "lebesgue" => EstimateMethod::LebesgueEnsemble,
        "siegel" => EstimateMethod::SiegelAsymptotic,
        "curve" => EstimateMethod::CurveEnsemble(PolynomialCurve::moment(d)?),
        other => return Err(LabError::InvalidParameter(format!("unknown method {other}")).into()),
    };
    let params = EnsembleParams {
        samples: cfg.count("samples")?,
        t_max: cfg.real("t_max"),
        t_step: cfg.real("t_step"),
        seed: cfg.seed,
    };
    let mut out = Outcome { table: Table::new(&["s", "mu", "lower", "upper", "mean"]), ..Default::default() };
    let (mean, spread) = if let EstimateMethod::SiegelAsymptotic = method {
        let e = dirichlet::estimate_f(d, mu, &method, &params)?;
        out.estimate("estimate", &e);
        (e.mean, 0.0)
    } else {
        if params.samples < 2 {
            return Err(LabError::SampleTooSmall { got: params.samples, needed: 2 }.into());
        }
        let profiles = dirichlet::ensemble_profiles(d, mu, &method, &params)?;
        let means: Vec<f64> = profiles.iter().map(|p| p.1.mean).collect();
        let mut plot = Vec::new();
        for (x, e) in &profiles {
            let s = x[0].to_f64();
            out.table.push(vec![num(s), num(mu), num(e.lower), num(e.upper), num(e.mean)]);
            plot.push((s, e.mean));
        }
        plot.sort_by(|a, b| a.0.total_cmp(&b.0));
        out.plots.push(("density.dat".into(), plot));
        let m = stats::mean(&means);
        let sd = stats::std_dev(&means);
        out.estimate(
            "estimate",
            json!({
                "mean": m,
                "std": sd,
                "ci_halfwidth": 1.96 * sd / (means.len() as f64).sqrt(),
                "n_samples": means.len(),
            }),
        );
        (m, sd)
    };
    let reference = cfg.real("reference");
    if reference >= 0.0 {
        let tol = cfg.real("rel_tol") * reference;
        out.acceptance.push(Acceptance::new(
            "reference_match",
            (mean - reference).abs() <= tol,
            format!("mean {mean} vs reference {reference} (tolerance {tol})"),
        ));
    }
    let max_std = cfg.real("max_std");
    if max_std >= 0.0 {
        out.acceptance.push(Acceptance::new("per_sample_spread", spread <= max_std, format!("std {spread} (bound {max_std})")));
    }
    Ok(out)
}

fn run_bestapprox(cfg: &ExperimentConfig) -> Result<Outcome, HarnessError> {
    let norm = norm(cfg)?;
    let q_max = cfg.count("q_max")? as u64;
    let given = cfg.vector("xi").to_vec();
    let points: Vec<Vec<f64>> = if given.is_empty() {
        let d = cfg.count("d")?.max(1);
        (0..cfg.count("points")?)
            .map(|i| {
                let mut r = RngStream::new(cfg.seed, i as u64);
                (0..d).map(|_| r.uniform()).collect()
            })
            .collect()
    } else {
        vec![given]
    };
    let d = points.first().map_or(1, Vec::len);
    let r0 = cfg.real("r0");
    let section = if r0 < 0.0 { SectionConfig::default_for(d, norm) } else { SectionConfig { r0, d, norm } };
    let per_point: LabResult<Vec<_>> = points
        .par_iter()
        .map(|xi| {
            let best = bestapprox::best_approximations(xi, norm, q_max);
            let returns = bestapprox::section_returns(xi, &section, q_max)?;
            let pooled = bestapprox::pooled_records(xi, norm, 1, q_max)?;
            Ok((best, returns, pooled))
        })
        .collect();
    let per_point = per_point?;
    let mut header: Vec<String> = (1..=d).map(|i| format!("xi{i}")).collect();
    header.push("q".into());
    header.extend((1..=d).map(|i| format!("p{i}")));
    header.push("err".into());
    header.extend((1..=d).map(|i| format!("disp{i}")));
    header.extend(["lambda1_proj", "in_B", "t_return"].map(String::from));
    let mut out = Outcome { table: Table { header, rows: Vec::new() }, ..Default::default() };
    let max_offset = cfg.count("max_offset")?;
    let mut worst = 0usize;
    let mut failures = 0usize;
    for (xi, (best, returns, pooled)) in points.iter().zip(&per_point) {
        for rec in best {
            let ret = returns.iter().find(|r| r.q == rec.q);
            let lambda1 = pooled.iter().find(|p| p.q == rec.q).map_or(f64::NAN, |p| p.lambda1);
            let mut row: Vec<String> = xi.iter().map(|x| num(*x)).collect();
            row.push(rec.q.to_string());
            row.extend(rec.p.iter().map(|p| p.to_string()));
            row.push(num(rec.err));
            row.extend(rec.disp.iter().map(|x| num(*x)));
            row.push(num(lambda1));
            row.push(flag(ret.is_some_and(|r| r.in_b)));
            row.push(ret.map_or(String::new(), |r| num(r.t)));
            out.table.push(row);
        }
        let qs: Vec<u64> = best.iter().map(|r| r.q).collect();
        let in_b: Vec<u64> = returns.iter().filter(|r| r.in_b).map(|r| r.q).collect();
        match bestapprox::agreement_offset(&qs, &in_b) {
            Some(off) if off <= max_offset => worst = worst.max(off),
            _ => failures += 1,
        }
    }
    out.estimate("points", points.len());
    out.estimate("r0", section.r0);
    out.estimate("worst_offset", worst);
    out.acceptance.push(Acceptance::new(
        "cross_path",
        failures == 0,
        format!("{failures} of {} points disagree beyond {max_offset} initial records", points.len()),
    ));
    Ok(out)
}

fn run_equidist(cfg: &ExperimentConfig) -> Result<Outcome, HarnessError> {
    let norm = norm(cfg)?;
    let n = cfg.count("points")?;
    let (q_min, q_max) = (cfg.count("q_min")? as u64, cfg.count("q_max")? as u64);
    let mut r = RngStream::new(cfg.seed, 0);
    let curve: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let s = r.uniform();
            vec![s, s * s]
        })
        .collect();
    let mut r = RngStream::new(cfg.seed, 1);
    let lebesgue: Vec<Vec<f64>> = (0..n).map(|_| vec![r.uniform(), r.uniform()]).collect();
    let a = bestapprox::pool_ensemble(&curve, norm, q_min, q_max)?;
    let b = bestapprox::pool_ensemble(&lebesgue, norm, q_min, q_max)?;
    let mut out = Outcome {
        table: Table::new(&["side", "q", "disp1", "disp2", "lambda1", "lambda2"]),
        ..Default::default()
    };
    for (side, recs) in [("curve", &a), ("lebesgue", &b)] {
        for p in recs.iter() {
            out.table.push(vec![side.into(), p.q.to_string(), num(p.disp[0]), num(p.disp[1]), num(p.lambda1), num(p.lambda2)]);
        }
    }
    let min_records = cfg.count("min_records")?;
    out.acceptance.push(Acceptance::new(
        "record_count",
        a.len() >= min_records && b.len() >= min_records,
        format!("{} curve and {} Lebesgue records (need {min_records})", a.len(), b.len()),
    ));
    match bestapprox::ensemble_statistics(&a, &b) {
        Ok(rep) => {
            let ks_max = cfg.real("ks_max");
            out.acceptance.push(Acceptance::new("ks", rep.max_ks() < ks_max, format!("max KS {} (bound {ks_max})", rep.max_ks())));
            out.estimate("report", &rep);
        }
        Err(e @ LabError::SampleTooSmall { .. }) => {
            out.acceptance.push(Acceptance::new("ks", false, e.to_string()));
        }
        Err(e) => return Err(e.into()),
    }
    Ok(out)
}

fn run_algapprox(cfg: &ExperimentConfig) -> Result<Outcome, HarnessError> {
    let d = cfg.count("d")?;
    let s = cfg.real("s");
    let (t_max, t_step) = (cfg.real("t_max"), cfg.real("t_step"));
    let mut out = Outcome { table: Table::new(&["s", "mu", "t", "has_point", "n_points"]), ..Default::default() };
    let mut density = Table::new(&["s", "mu", "lower", "upper"]);
    let audit_step = cfg.real("audit_step");
    let t0 = cfg.real("audit_t_min");
    if audit_step <= 0.0 {
        return Err(LabError::InvalidParameter("audit_step must be positive".into()).into());
    }
    let times: Vec<f64> = (0..).map(|k| t0 + k as f64 * audit_step).take_while(|&t| t <= t_max + 1e-9).collect();
    let mut audits = Vec::new();
    for &mu in cfg.vector("mu") {
        let prof = algapprox::alg_density_profile(d, s, mu, t_max, t_step)?;
        for ((t, h), n) in prof.times.iter().zip(&prof.has_point).zip(&prof.n_points) {
            out.table.push(vec![num(s), num(mu), num(*t), flag(*h), n.to_string()]);
        }
        density.push(vec![num(s), num(mu), num(prof.estimate.lower), num(prof.estimate.upper)]);
        out.plots.push((format!("profile_mu{mu}.dat"), prof.times.iter().zip(&prof.n_points).map(|(t, n)| (*t, *n as f64)).collect()));
        let audit = algapprox::correspondence_audit(d, s, mu, cfg.real("eps"), &times)?;
        let failing = audit
            .rows
            .iter()
            .filter(|r| audit.threshold.is_some_and(|th| r.t >= th) && r.forward_failures + r.backward_failures > 0)
            .count();
        let pairs: usize = audit.rows.iter().map(|r| r.forward_pairs).sum();
        let points: usize = audit.rows.iter().map(|r| r.backward_points).sum();
        out.acceptance.push(Acceptance::new(
            &format!("audit_mu{mu}"),
            audit.threshold.is_some() && failing == 0,
            format!("threshold {:?}, {pairs} forward pairs, {points} backward points", audit.threshold),
        ));
        audits.push(json!({"mu": mu, "estimate": prof.estimate, "degenerate": prof.degenerate, "audit": audit}));
        if d == 2 {
            let cert = sqrt2_certificate(mu, t_max, t_step)?;
            out.acceptance.push(Acceptance::new(
                &format!("sqrt2_certificate_mu{mu}"),
                cert.0 == cert.1,
                format!("certificate found at {} of {} times t >= 2 ln 2", cert.0, cert.1),
            ));
        }
    }
    out.estimate("profiles", audits);
    out.extra_files.push(("density.csv".into(), String::from_utf8(crate::report::csv_bytes(&density)?).unwrap_or_default()));
    Ok(out)
}

/// At `s = √2`, counts the grid times `t ≥ 2 ln 2` at which `±(-2, 0, 1)` is
/// among the lattice points of the region, against the number of such times.
pub fn sqrt2_certificate(mu: f64, t_max: f64, t_step: f64) -> LabResult<(usize, usize)> {
    let params = RegionParams { d: 2, s: SQRT_2, mu, eps: 0.0 };
    let times: Vec<f64> = (0..).map(|k| 2.0 * LN_2 + k as f64 * t_step).take_while(|&t| t <= t_max).collect();
    let found: LabResult<Vec<bool>> = times
        .par_iter()
        .map(|&t| {
            let pts = algapprox::lattice_points_in_region(&params, t, RegionMode::Exact, false)?;
            Ok(pts.iter().any(|p| p.b == [-2, 0, 1] || p.b == [2, 0, -1]))
        })
        .collect();
    Ok((found?.iter().filter(|&&f| f).count(), times.len()))
}

fn run_kmtree(cfg: &ExperimentConfig) -> Result<Outcome, HarnessError> {
    let n = cfg.count("instances")?;
    let t_max = cfg.real("t_max");
    let eps = cfg.vector("eps").to_vec();
    let grid = cfg.count("grid")?;
    let results: LabResult<Vec<_>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = RngStream::new(cfg.seed, i as u64);
            let input = kmtree::random_instance(&mut rng, t_max)?;
            let root = kmtree::build_tree(&input)?;
            let order = kmtree::verify_weakly_ordered(&root);
            let bad: LabResult<Vec<_>> = eps.iter().map(|&e| kmtree::partitions_and_bad(&input, &root, e, grid)).collect();
            Ok((input.t, root, order, bad?))
        })
        .collect();
    let results = results?;
    let mut out = Outcome {
        table: Table::new(&[
            "instance",
            "t",
            "nodes",
            "depth",
            "weakly_ordered",
            "eps",
            "partition_sizes_ok",
            "cells_disjoint",
            "collection_size",
            "bad_intervals",
            "misses",
        ]),
        ..Default::default()
    };
    let mut failures = Vec::new();
    for (i, (t, root, order, bads)) in results.iter().enumerate() {
        if !order.ok {
            failures.push(format!("instance {i}: {:?}", order.violation));
        }
        for (e, b) in eps.iter().zip(bads) {
            let sizes_ok = b.partitions.iter().all(|p| p.cells.len() as f64 <= 6f64.powi(p.level as i32));
            out.table.push(vec![
                i.to_string(),
                num(*t),
                root.node_count().to_string(),
                root.depth().to_string(),
                flag(order.ok),
                num(*e),
                flag(sizes_ok),
                flag(b.cells_disjoint),
                b.collection_size.to_string(),
                b.bad.len().to_string(),
                b.cover.misses.to_string(),
            ]);
            if !sizes_ok || !b.cells_disjoint || b.cover.misses > 0 {
                failures.push(format!("instance {i}, eps {e}: sizes {sizes_ok}, disjoint {}, misses {}", b.cells_disjoint, b.cover.misses));
            }
        }
    }
    let roots: Vec<_> = results.iter().map(|r| &r.1).collect();
    out.extra_files.push(("tree.json".into(), serde_json::to_string_pretty(&roots).unwrap_or_default()));
    out.estimate("instances", n);
    out.acceptance.push(Acceptance::new(
        "km_tree",
        failures.is_empty(),
        if failures.is_empty() { format!("{n} instances verified") } else { failures.join("; ") },
    ));
    Ok(out)
}

fn run_stochastic(cfg: &ExperimentConfig) -> Result<Outcome, HarnessError> {
    let (beta, gamma) = (cfg.real("beta"), cfg.real("gamma"));
    let trials = cfg.count("trials")?;
    let family = IntervalFamily {
        beta,
        gamma,
        f_growth: stochastic::sqrt_growth,
        source: PackingSource::RandomBlocks { seed: cfg.seed, fill: 1.0 },
    };
    let freq = stochastic::short_intervals_simulate(&family, cfg.count("n")?, trials, cfg.seed)?;
    let azuma = stochastic::azuma_simulate(&MartingaleSpec::coin_walk(), cfg.count("azuma_n")?, trials, cfg.seed)?;
    let exponents = stochastic::monomial_exponents(5)?;
    let goodness = stochastic::polynomial_goodness_suite(cfg.seed, cfg.count("polys_per_degree")?, 5);
    let dilation = stochastic::dilation_suite(cfg.seed, cfg.count("dilation_cases")?);
    let sparse_configs = cfg.count("sparse_configs")?;
    let sparse_failures = stochastic::sparse_cover_suite(cfg.seed, sparse_configs)?;

    let mut out = Outcome { table: Table::new(&["check", "index", "value", "bound"]), ..Default::default() };
    let freq_bound = 1.0 / gamma + cfg.real("freq_slack");
    let azuma_bound = 1.0 + cfg.real("azuma_slack");
    for (i, f) in freq.frequencies.iter().enumerate() {
        out.table.push(vec!["short_intervals".into(), i.to_string(), num(*f), num(freq_bound)]);
    }
    for (i, p) in azuma.proxies.iter().enumerate() {
        out.table.push(vec!["azuma".into(), i.to_string(), num(*p), num(azuma_bound)]);
    }
    for (n, s) in &exponents {
        out.table.push(vec!["monomial_exponent".into(), n.to_string(), num(*s), num(1.0 / *n as f64)]);
    }
    for g in &goodness {
        out.table.push(vec!["polynomial_fitted_c".into(), g.degree.to_string(), num(g.fitted_c), num(g.params.c)]);
    }
    let fq = freq.fraction_within(freq_bound);
    let fa = azuma.fraction_within(azuma_bound);
    out.acceptance.push(Acceptance::new("short_intervals", fq >= 0.95, format!("{fq} of trials at most {freq_bound}")));
    out.acceptance.push(Acceptance::new("azuma", fa >= 0.95, format!("{fa} of trials at most {azuma_bound}")));
    let worst_exp = exponents.iter().map(|(n, s)| (s - 1.0 / *n as f64).abs()).fold(0.0, f64::max);
    out.acceptance.push(Acceptance::new("monomial_exponents", worst_exp <= 0.02, format!("largest deviation {worst_exp}")));
    let gv: usize = goodness.iter().map(|g| g.violations).sum();
    out.acceptance.push(Acceptance::new("polynomial_goodness", gv == 0, format!("{gv} violations")));
    out.acceptance.push(Acceptance::new(
        "dilation",
        dilation.violations.is_empty(),
        format!("{} violations in {} cases", dilation.violations.len(), dilation.checked),
    ));
    out.acceptance.push(Acceptance::new(
        "sparse_cover",
        sparse_failures == 0,
        format!("{sparse_failures} violations in {sparse_configs} configurations"),
    ));
    let reports = json!({
        "short_intervals": freq,
        "azuma": azuma,
        "monomial_exponents": exponents,
        "goodness": goodness,
        "dilation": dilation,
        "sparse_cover": {"configs": sparse_configs, "violations": sparse_failures},
    });
    out.extra_files.push(("stochastic.json".into(), serde_json::to_string_pretty(&reports).unwrap_or_default()));
    out.estimate("short_intervals_within", fq);
    out.estimate("azuma_within", fa);
    Ok(out)
}

fn run_unipotent(cfg: &ExperimentConfig) -> Result<Outcome, HarnessError> {
    let (t_max, t_early, t_step) = (cfg.real("t_max"), cfg.real("t_early"), cfg.real("t_step"));
    let shift = cfg.real("shift");
    let curve = PolynomialCurve::moment(2)?;
    let bits = FlowSpec::main_flow(1, 2).bits_for_horizon(t_max);
    let observables = dirichlet::default_observables();
    let rows: LabResult<Vec<(f64, Vec<f64>)>> = (0..cfg.count("samples")?)
        .into_par_iter()
        .map(|i| {
            let mut rng = RngStream::new(cfg.seed, i as u64);
            let s = Dyadic::random_unit(&mut rng, bits);
            let v = dirichlet::unipotent_discrepancy_profile(&curve, &s, t_step, &[t_early, t_max], &[shift], &observables)?;
            Ok((s.to_f64(), v))
        })
        .collect();
    let rows = rows?;
    let mut out = Outcome {
        table: Table::new(&["sample", "s", "discrepancy_early", "discrepancy_final"]),
        ..Default::default()
    };
    for (i, (s, v)) in rows.iter().enumerate() {
        out.table.push(vec![i.to_string(), num(*s), num(v[0]), num(v[1])]);
    }
    let early: Vec<f64> = rows.iter().map(|r| r.1[0]).collect();
    let fin: Vec<f64> = rows.iter().map(|r| r.1[1]).collect();
    let bound = cfg.real("max_discrepancy");
    let worst = fin.iter().cloned().fold(0.0, f64::max);
    let (me, mf) = (stats::mean(&early), stats::mean(&fin));
    out.estimate("mean_early", me);
    out.estimate("mean_final", mf);
    out.acceptance.push(Acceptance::new("final_discrepancy", worst <= bound, format!("largest {worst} (bound {bound})")));
    out.acceptance.push(Acceptance::new("decay", me > mf, format!("mean {me} at t = {t_early}, {mf} at t = {t_max}")));
    Ok(out)
}

fn run_selftest(cfg: &ExperimentConfig) -> Result<Outcome, HarnessError> {
    let mut out = Outcome { table: Table::new(&["check", "pass"]), ..Default::default() };
    let mut check = |name: &str, pass: bool, detail: String| {
        out.table.push(vec![name.into(), flag(pass)]);
        out.acceptance.push(Acceptance::new(name, pass, detail));
    };
    let qs: Vec<u64> = bestapprox::best_approximations(&[SQRT_2], NormKind::Sup, 500).iter().map(|r| r.q).collect();
    check("pell_denominators", qs == [1, 2, 5, 12, 29, 70, 169, 408], format!("{qs:?}"));
    let mut agree = 0;
    for i in 0..60u64 {
        let mut r = RngStream::new(cfg.seed, i);
        let xi = [r.uniform(), r.uniform()];
        let n = 1 + r.below(200);
        let a = dirichlet::improvable_at(&xi, n as f64, 0.5, ImprovabilityMethod::Dynamical)?;
        let b = dirichlet::improvable_at(&xi, n as f64, 0.5, ImprovabilityMethod::Direct)?;
        agree += (a == b) as usize;
    }
    check("dani_small", agree == 60, format!("{agree}/60"));
    let siegel = dirichlet::estimate_f(1, 0.1, &EstimateMethod::SiegelAsymptotic, &EnsembleParams::default())?.mean;
    check("siegel_term", (siegel - 0.12 / std::f64::consts::PI.powi(2)).abs() < 1e-12, format!("{siegel}"));
    let failures = stochastic::sparse_cover_suite(cfg.seed, 100)?;
    check("sparse_cover", failures == 0, format!("{failures} violations"));
    let cert = sqrt2_certificate(0.25, 4.0, 0.25)?;
    check("sqrt2_certificate", cert.0 == cert.1, format!("{cert:?}"));
    Ok(out)
}
