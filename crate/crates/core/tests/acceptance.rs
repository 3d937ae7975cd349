//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::f64::consts::{LN_2, PI, SQRT_2};
use std::process::ExitCode;
use std::time::Instant;

use rayon::prelude::*;

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
use horolab_core::Result;

type Verdict = Result<(bool, String)>;

fn dani_correspondence() -> Verdict {
    let mut agree = 0;
    let cases = 500;
    for i in 0..cases {
        let mut r = RngStream::new(1, i);
        let d = 1 + (i % 2) as usize;
        let mu = [0.3, 0.5, 0.8][(i / 2 % 3) as usize];
        let xi: Vec<f64> = (0..d).map(|_| r.uniform()).collect();
        let n = (1 + r.below(500)) as f64;
        let a = dirichlet::improvable_at(&xi, n, mu, ImprovabilityMethod::Dynamical)?;
        let b = dirichlet::improvable_at(&xi, n, mu, ImprovabilityMethod::Direct)?;
        agree += (a == b) as u64;
    }
    Ok((agree == cases, format!("{agree}/{cases} cases agree")))
}

fn curve_density_scale() -> Verdict {
    let curve = PolynomialCurve::moment(2)?;
    let params = EnsembleParams { samples: 50, t_max: 60.0, t_step: 0.02, seed: 1 };
    let profiles = dirichlet::ensemble_profiles(2, 0.5, &EstimateMethod::CurveEnsemble(curve), &params)?;
    let means: Vec<f64> = profiles.iter().map(|p| p.1.mean).collect();
    let (m, sd) = (stats::mean(&means), stats::std_dev(&means));
    let reference_params = EnsembleParams { samples: 400, t_max: 60.0, t_step: 0.02, seed: 2 };
    let reference = dirichlet::estimate_f(2, 0.5, &EstimateMethod::LebesgueEnsemble, &reference_params)?.mean;
    let pass = sd <= 0.05 && (m - reference).abs() <= 0.03;
    Ok((pass, format!("per-s std {sd:.4} (<= 0.05), curve mean {m:.4} vs Lebesgue {reference:.4} (gap <= 0.03)")))
}

fn siegel_anchor() -> Verdict {
    let mu = 0.1;
    let zeta2: f64 = PI * PI / 6.0;
    let target = (2.0 * mu) * (2.0 * mu) / (2.0 * zeta2);
    let params = EnsembleParams { samples: 200, t_max: 1000.0, t_step: 0.05, seed: 3 };
    let e = dirichlet::estimate_f(1, mu, &EstimateMethod::LebesgueEnsemble, &params)?.mean;
    let rel = (e / target - 1.0).abs();
    Ok((rel <= 0.15, format!("estimate {e:.6} vs {target:.7}, relative error {rel:.3} (<= 0.15)")))
}

fn pell_denominators() -> Verdict {
    // Convergent denominators of [1; 2, 2, ...].
    let mut oracle = vec![1u64, 2];
    while oracle.len() < 8 {
        let k = oracle.len();
        oracle.push(2 * oracle[k - 1] + oracle[k - 2]);
    }
    let qs: Vec<u64> = bestapprox::best_approximations(&[SQRT_2], NormKind::Sup, 408).iter().map(|r| r.q).collect();
    Ok((qs == oracle && qs == [1, 2, 5, 12, 29, 70, 169, 408], format!("{qs:?}")))
}

fn cross_path() -> Verdict {
    let section = SectionConfig::default_for(2, NormKind::Sup);
    let offsets: Result<Vec<Option<usize>>> = (0..100u64)
        .into_par_iter()
        .map(|i| {
            let mut r = RngStream::new(5, i);
            let xi = [r.uniform(), r.uniform()];
            let best: Vec<u64> = bestapprox::best_approximations(&xi, NormKind::Sup, 100_000).iter().map(|r| r.q).collect();
            let returns: Vec<u64> = bestapprox::section_returns(&xi, &section, 100_000)?
                .iter()
                .filter(|r| r.in_b)
                .map(|r| r.q)
                .collect();
            Ok(bestapprox::agreement_offset(&best, &returns))
        })
        .collect();
    let offsets = offsets?;
    let failures = offsets.iter().filter(|o| o.is_none_or(|k| k > 5)).count();
    let worst = offsets.iter().flatten().max().copied().unwrap_or(0);
    Ok((failures == 0, format!("{failures}/100 points disagree beyond 5 records, worst offset {worst}, r0 {:.4}", section.r0)))
}

fn equidistribution_match() -> Verdict {
    let n = 700;
    let mut r = RngStream::new(6, 0);
    let curve: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let s = r.uniform();
            vec![s, s * s]
        })
        .collect();
    let mut r = RngStream::new(6, 1);
    let lebesgue: Vec<Vec<f64>> = (0..n).map(|_| vec![r.uniform(), r.uniform()]).collect();
    let a = bestapprox::pool_ensemble(&curve, NormKind::Sup, 100, 1_000_000)?;
    let b = bestapprox::pool_ensemble(&lebesgue, NormKind::Sup, 100, 1_000_000)?;
    let rep = bestapprox::ensemble_statistics(&a, &b)?;
    let pass = rep.n_a >= 5000 && rep.n_b >= 5000 && rep.ks.iter().all(|k| k.1 < 0.05);
    Ok((pass, format!("{} vs {} records, max KS {:.4} (< 0.05)", rep.n_a, rep.n_b, rep.max_ks())))
}

fn two_way_audit() -> Verdict {
    let times: Vec<f64> = (0..=400).map(|k| 6.0 + k as f64 * 0.01).collect();
    let audit = algapprox::correspondence_audit(2, SQRT_2 - 0.001, 0.25, 0.1, &times)?;
    let Some(threshold) = audit.threshold else {
        return Ok((false, "no threshold reported".into()));
    };
    let counterexamples: usize = audit
        .rows
        .iter()
        .filter(|r| r.t >= threshold)
        .map(|r| r.forward_failures + r.backward_failures)
        .sum();
    let params = RegionParams { d: 2, s: SQRT_2, mu: 0.25, eps: 0.0 };
    let cert_times: Vec<f64> = (0..).map(|k| 2.0 * LN_2 + k as f64 * 0.01).take_while(|&t| t <= 10.0).collect();
    let found: Result<Vec<bool>> = cert_times
        .par_iter()
        .map(|&t| {
            let pts = algapprox::lattice_points_in_region(&params, t, RegionMode::Exact, false)?;
            Ok(pts.iter().any(|p| p.b == [-2, 0, 1] || p.b == [2, 0, -1]))
        })
        .collect();
    let detected = found?.iter().filter(|&&f| f).count();
    let pass = counterexamples == 0 && detected == cert_times.len();
    Ok((
        pass,
        format!(
            "threshold t = {threshold}, {counterexamples} counterexamples above it, certificate at {detected}/{} times",
            cert_times.len()
        ),
    ))
}

fn km_tree() -> Verdict {
    let mut rng = RngStream::new(8, 0);
    let mut problems = Vec::new();
    let mut nodes = 0;
    for i in 0..20 {
        let input = kmtree::random_instance(&mut rng, 3.0)?;
        let root = kmtree::build_tree(&input)?;
        nodes += root.node_count();
        let order = kmtree::verify_weakly_ordered(&root);
        if !order.ok {
            problems.push(format!("instance {i} not weakly ordered"));
        }
        for eps in [0.2, 0.5] {
            let rep = kmtree::partitions_and_bad(&input, &root, eps, 10_000)?;
            if let Some(p) = rep.partitions.iter().find(|p| p.cells.len() as f64 > 6f64.powi(p.level as i32)) {
                problems.push(format!("instance {i}: level {} has {} cells", p.level, p.cells.len()));
            }
            if !rep.cells_disjoint {
                problems.push(format!("instance {i}, eps {eps}: overlapping cell"));
            }
            if rep.cover.misses > 0 {
                problems.push(format!("instance {i}, eps {eps}: {} misses", rep.cover.misses));
            }
        }
    }
    let detail = if problems.is_empty() { format!("20 instances, {nodes} nodes") } else { problems.join("; ") };
    Ok((problems.is_empty(), detail))
}

fn short_intervals_and_azuma() -> Verdict {
    let family = IntervalFamily {
        beta: 0.5,
        gamma: 4.0,
        f_growth: stochastic::sqrt_growth,
        source: PackingSource::RandomBlocks { seed: 9, fill: 1.0 },
    };
    let freq = stochastic::short_intervals_simulate(&family, 10_000, 100, 9)?;
    let azuma = stochastic::azuma_simulate(&MartingaleSpec::coin_walk(), 100_000, 100, 9)?;
    let (fq, fa) = (freq.fraction_within(0.30), azuma.fraction_within(1.1));
    Ok((fq >= 0.95 && fa >= 0.95, format!("frequency <= 0.30 in {fq} of trials, Azuma proxy <= 1.1 in {fa}")))
}

fn goodness_suite() -> Verdict {
    let exponents = stochastic::monomial_exponents(5)?;
    let worst = exponents.iter().map(|(n, s)| (s - 1.0 / *n as f64).abs()).fold(0.0, f64::max);
    let dilation = stochastic::dilation_suite(10, 1000);
    let sparse = stochastic::sparse_cover_suite(10, 1000)?;
    let pass = exponents.len() == 5 && worst <= 0.02 && dilation.checked >= 1000 && dilation.violations.is_empty() && sparse == 0;
    Ok((
        pass,
        format!(
            "exponent deviation {worst:.2e}, dilation {}/{} violations, sparse cover {sparse}/1000 violations",
            dilation.violations.len(),
            dilation.checked
        ),
    ))
}

fn unipotent_invariance() -> Verdict {
    let curve = PolynomialCurve::moment(2)?;
    let bits = FlowSpec::main_flow(1, 2).bits_for_horizon(2000.0);
    let obs = dirichlet::default_observables();
    let rows: Result<Vec<Vec<f64>>> = (0..20u64)
        .into_par_iter()
        .map(|i| {
            let mut r = RngStream::new(11, i);
            let s = Dyadic::random_unit(&mut r, bits);
            dirichlet::unipotent_discrepancy_profile(&curve, &s, 0.1, &[200.0, 2000.0], &[0.5], &obs)
        })
        .collect();
    let rows = rows?;
    let early = stats::mean(&rows.iter().map(|v| v[0]).collect::<Vec<_>>());
    let late = stats::mean(&rows.iter().map(|v| v[1]).collect::<Vec<_>>());
    let worst = rows.iter().map(|v| v[1]).fold(0.0, f64::max);
    Ok((worst <= 0.05 && early > late, format!("max at T=2000 {worst:.4} (<= 0.05), mean {early:.4} at T=200 > {late:.4}")))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Verdict); 11] = [
        ("dani_correspondence", dani_correspondence),
        ("curve_density_scale", curve_density_scale),
        ("siegel_anchor", siegel_anchor),
        ("pell_denominators", pell_denominators),
        ("cross_path", cross_path),
        ("equidistribution_match", equidistribution_match),
        ("two_way_audit", two_way_audit),
        ("km_tree", km_tree),
        ("short_intervals_and_azuma", short_intervals_and_azuma),
        ("goodness_suite", goodness_suite),
        ("unipotent_invariance", unipotent_invariance),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (pass, detail) = check().unwrap_or_else(|e| (false, format!("error: {e}")));
        failed += !pass as usize;
        println!(
            "{} {:>2} {name}: {detail} [{:.1}s]",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            start.elapsed().as_secs_f64()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
