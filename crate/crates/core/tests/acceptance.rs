//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any criterion fails.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tvd_npl::cli::{run_reproduce, Benchmark, ModelChoice, ReproduceOutcome, RunConfig, SummaryRow};
use tvd_npl::distributions::uniform_weights;
use tvd_npl::npl::{dirichlet_augmented, dirichlet_uniform, draw_rng};
use tvd_npl::verify::{
    check_concentration, check_consistency, check_robustness_bound, ConcentrationSetup,
    ConsistencySetup, FiniteJoint, RobustnessSetup,
};
use tvd_npl::{
    build_empirical, kld_loss, loss_grad, model_pmf, posterior_bootstrap, tvd_loss, CovariateKind, Dataset,
    LossKind, ModelSpec, NplConfig,
};

const SEED: u64 = 20;

struct Outcome {
    pass: bool,
    detail: String,
}

fn criterion(id: u32, name: &str, budget: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let out = f();
    report(id, name, budget, start.elapsed(), out)
}

fn report(id: u32, name: &str, budget: Duration, elapsed: Duration, out: Outcome) -> bool {
    let in_time = elapsed <= budget;
    let pass = out.pass && in_time;
    println!(
        "[{}] criterion {id}: {name} ({:.1}s of {:.0}s budget) {}",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        budget.as_secs_f64(),
        out.detail
    );
    pass
}

fn reproduce(bench: Benchmark, f: impl FnOnce(&mut RunConfig)) -> ReproduceOutcome {
    let mut cfg = RunConfig {
        command: tvd_npl::cli::Command::Reproduce,
        benchmark: Some(bench),
        seed: SEED,
        draws: 200,
        repeats: 20,
        ..Default::default()
    };
    f(&mut cfg);
    run_reproduce(&cfg).expect("benchmark run")
}

fn rows(o: &ReproduceOutcome, cell: f64) -> (&SummaryRow, &SummaryRow) {
    (o.row(cell, LossKind::Tvd).expect("tvd row"), o.row(cell, LossKind::Kld).expect("kld row"))
}

fn excluded_fraction(o: &ReproduceOutcome) -> f64 {
    let total: usize = o.summary.iter().map(|r| r.draws + r.excluded).sum();
    o.summary.iter().map(|r| r.excluded).sum::<usize>() as f64 / total as f64
}

fn pe(r: &SummaryRow) -> f64 {
    r.param_error_q50.expect("parameter error")
}

fn c1() -> Outcome {
    let o = reproduce(Benchmark::EpsPoisson, |c| c.k_grid = vec![0]);
    let (t, k) = rows(&o, 0.0);
    let rel = (pe(t) - pe(k)).abs() / pe(k);
    Outcome {
        pass: rel < 0.2,
        detail: format!("median |lambda-3|: tvd {:.4} kld {:.4} relative gap {:.3} (need < 0.2)", pe(t), pe(k), rel),
    }
}

fn c2_c3() -> (Outcome, Outcome) {
    let o = reproduce(Benchmark::EpsPoisson, |c| c.k_grid = vec![5, 10, 15, 20]);
    let (mut ok2, mut ok3) = (true, true);
    let (mut d2, mut d3) = (Vec::new(), Vec::new());
    for k in [5.0, 10.0, 15.0, 20.0] {
        let (t, l) = rows(&o, k);
        let oracle = 0.15 * k;
        ok2 &= (pe(l) / oracle - 1.0).abs() <= 0.25 && pe(t) <= 0.4 && pe(t) < pe(l);
        ok3 &= t.pred_lik_q50 >= l.pred_lik_q50;
        d2.push(format!("k={k}: tvd {:.3} kld {:.3} (oracle {oracle:.2})", pe(t), pe(l)));
        d3.push(format!("k={k}: tvd {:.4} kld {:.4}", t.pred_lik_q50, l.pred_lik_q50));
    }
    let ex = excluded_fraction(&o);
    (
        Outcome { pass: ok2 && ex < 0.05, detail: format!("{}; excluded {:.3}", d2.join(", "), ex) },
        Outcome { pass: ok3, detail: format!("median predictive likelihood {}", d3.join(", ")) },
    )
}

fn c4() -> Outcome {
    let o = reproduce(Benchmark::ZeroBinomial, |c| c.eps_grid = vec![0.1, 0.2]);
    let mut ok = true;
    let mut d = Vec::new();
    for eps in [0.1, 0.2] {
        let (t, l) = rows(&o, eps);
        ok &= pe(t) < pe(l) && t.pred_lik_q50 >= l.pred_lik_q50;
        d.push(format!(
            "eps={eps}: |beta-0.25| tvd {:.4} kld {:.4}, lik tvd {:.4} kld {:.4}",
            pe(t),
            pe(l),
            t.pred_lik_q50,
            l.pred_lik_q50
        ));
    }
    let ex = excluded_fraction(&o);
    Outcome { pass: ok && ex < 0.05, detail: format!("{}; excluded {:.3}", d.join("; "), ex) }
}

fn c5() -> Outcome {
    let q = FiniteJoint::new(2, 2, vec![0.0, 0.0, 1.0, 0.0]).unwrap();
    let setup = RobustnessSetup::bernoulli_2x2(q);
    let mut ok = true;
    let mut d = Vec::new();
    for eps in [0.0, 0.05, 0.15, 0.3] {
        let r = check_robustness_bound(&setup, eps, SEED).unwrap();
        let exact = &r.rows[0];
        ok &= exact.observed - 2.0 * eps <= 1e-12 && r.pass;
        d.push(format!("eps={eps}: max diff {:.4}", exact.observed));
    }
    Outcome { pass: ok, detail: d.join(", ") }
}

fn c6() -> Outcome {
    let o = reproduce(Benchmark::ProbitSynthetic, |c| c.model = Some(ModelChoice::Probit));
    let (t, l) = rows(&o, 0.1);
    let ex = excluded_fraction(&o);
    Outcome {
        pass: t.pred_lik_q50 >= l.pred_lik_q50 && ex < 0.05,
        detail: format!(
            "median predictive likelihood tvd {:.4} kld {:.4}; excluded {:.3}",
            t.pred_lik_q50, l.pred_lik_q50, ex
        ),
    }
}

fn c7() -> Outcome {
    let o = reproduce(Benchmark::ProbitSynthetic, |c| {
        c.model = Some(ModelChoice::Mlp);
        c.hidden = 8;
    });
    let (t, l) = rows(&o, 0.1);
    let converged = 1.0 - excluded_fraction(&o);
    Outcome {
        pass: converged >= 0.95 && t.pred_lik_q50 >= l.pred_lik_q50 - 0.01,
        detail: format!(
            "converged {:.3}; median predictive likelihood tvd {:.4} kld {:.4}",
            converged, t.pred_lik_q50, l.pred_lik_q50
        ),
    }
}

fn c8() -> Outcome {
    let r = check_concentration(&ConcentrationSetup::two_by_two(), &[125, 500, 2000], 2000, SEED).unwrap();
    let d: Vec<String> = r.rows.iter().map(|row| format!("{} {:.4}", row.label, row.observed)).collect();
    Outcome { pass: r.pass, detail: d.join(", ") }
}

fn c9() -> Outcome {
    let setups = [
        ConsistencySetup::contaminated_poisson(3.0, 0.15, 5),
        ConsistencySetup::contaminated_bernoulli(0.3, 0.1),
    ];
    let mut ok = true;
    let mut d = Vec::new();
    for s in &setups {
        let r = check_consistency(s, &[100, 400, 1600], 50, SEED).unwrap();
        ok &= r.pass;
        let medians: Vec<String> = r.rows.iter().map(|row| format!("{:.4}", row.observed)).collect();
        d.push(format!("{}: medians {}", r.setting, medians.join(" > ")));
    }
    Outcome { pass: ok, detail: d.join("; ") }
}

fn normalized(v: Vec<f64>) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

/// Randomized checks of the loss, sampler and bootstrap invariants.
fn c10() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut failures = Vec::new();
    let models = [
        (ModelSpec::poisson(1), 8u64),
        (ModelSpec::binomial(5, 1), 5),
        (ModelSpec::probit(2), 1),
        (ModelSpec::mlp(3, 2), 1),
    ];
    let mut checks = 0;
    for _ in 0..40 {
        for (m, max_y) in &models {
            let n = rng.random_range(2..15);
            let d = m.covariate_dim;
            let lattice: Vec<(Vec<f64>, u64)> = (0..n)
                .map(|i| ((0..d).map(|j| ((i + j) % 3) as f64).collect(), rng.random_range(0..=*max_y)))
                .collect();
            let data = Dataset::from_rows(&lattice, CovariateKind::Discrete).unwrap();
            let w = normalized((0..n).map(|_| rng.random_range(0.05..1.0)).collect());
            let p: Vec<f64> = (0..m.param_dim()).map(|_| rng.random_range(-0.8..0.8)).collect();
            let emp = build_empirical(&data, &w).unwrap();
            checks += 1;

            let v = tvd_loss(&emp, m, &p).unwrap();
            if !(0.0..=1.0).contains(&v) {
                failures.push(format!("range {v}"));
            }
            for kind in LossKind::ALL {
                let g = loss_grad(kind, &emp, m, &p).unwrap();
                let f = |q: &[f64]| match kind {
                    LossKind::Tvd => tvd_loss(&emp, m, q).unwrap(),
                    LossKind::Kld => kld_loss(&emp, m, q).unwrap().value,
                };
                for i in 0..p.len() {
                    let (mut up, mut dn) = (p.clone(), p.clone());
                    up[i] += 1e-6;
                    dn[i] -= 1e-6;
                    let fd = (f(&up) - f(&dn)) / 2e-6;
                    if (g[i] - fd).abs() > 1e-5 * g[i].abs().max(fd.abs()).max(1.0) {
                        failures.push(format!("{} {kind} gradient {i}: {} vs {fd}", m.name(), g[i]));
                    }
                }
            }

            let order: Vec<usize> = (0..n).rev().collect();
            let pw: Vec<f64> = order.iter().map(|&i| w[i]).collect();
            let perm = tvd_loss(&build_empirical(&data.subset(&order).unwrap(), &pw).unwrap(), m, &p).unwrap();
            let mut idx: Vec<usize> = (0..n).collect();
            idx.push(0);
            let mut sw = w.clone();
            sw[0] /= 2.0;
            sw.push(w[0] / 2.0);
            let split = tvd_loss(&build_empirical(&data.subset(&idx).unwrap(), &sw).unwrap(), m, &p).unwrap();
            if (perm - v).abs() > 1e-12 || (split - v).abs() > 1e-12 {
                failures.push(format!("permutation/split {v} {perm} {split}"));
            }

            let singles: Vec<(Vec<f64>, u64)> = (0..n)
                .map(|i| ((0..d).map(|j| i as f64 + 0.1 * j as f64).collect(), lattice[i].1))
                .collect();
            let sdata = Dataset::from_rows(&singles, CovariateKind::Continuous).unwrap();
            let semp = build_empirical(&sdata, &w).unwrap();
            let mut expected = 1.0;
            for (i, (x, y)) in singles.iter().enumerate() {
                expected -= w[i] * model_pmf(m, &p, x, &[*y]).unwrap().head[0].1;
            }
            if (tvd_loss(&semp, m, &p).unwrap() - expected).abs() > 1e-12 {
                failures.push("unique-covariate identity".into());
            }
        }
    }

    let data = Dataset::from_outcomes(vec![0, 1, 1, 2, 3, 3, 4, 12, 13, 2, 3]).unwrap();
    let cfg = NplConfig { draws: 32, master_seed: SEED, parallelism: 1, ..Default::default() };
    let a = posterior_bootstrap(&data, &ModelSpec::poisson(0), LossKind::Tvd, &cfg).unwrap();
    let b = posterior_bootstrap(&data, &ModelSpec::poisson(0), LossKind::Tvd, &NplConfig { parallelism: 8, ..cfg })
        .unwrap();
    if a != b {
        failures.push("parallelism changed draws".into());
    }

    let mut r = draw_rng(SEED, 0);
    let draws = 100_000;
    let (mut s1, mut s2) = (0.0, 0.0);
    for _ in 0..draws {
        let w = dirichlet_uniform(5, &mut r);
        s1 += w[0];
        s2 += w[0] * w[0];
    }
    let mean = s1 / draws as f64;
    let var = s2 / draws as f64 - mean * mean;
    if (mean - 0.2).abs() > 0.005 || (var / (0.8 / 30.0) - 1.0).abs() > 0.1 {
        failures.push(format!("Dirichlet moments {mean} {var}"));
    }
    let mut pseudo = 0.0;
    for _ in 0..20_000 {
        pseudo += dirichlet_augmented(8, 4, 2.0, &mut r).unwrap().1.iter().sum::<f64>();
    }
    if (pseudo / 20_000.0 - 0.2).abs() > 0.01 {
        failures.push(format!("augmented pseudo mass {}", pseudo / 20_000.0));
    }
    let u = build_empirical(&data, &uniform_weights(data.len())).unwrap();
    if u.groups().len() != 1 {
        failures.push("covariate-free data should form one group".into());
    }

    Outcome {
        pass: failures.is_empty(),
        detail: if failures.is_empty() {
            format!("{checks} randomized loss cases, determinism and Dirichlet moments ok")
        } else {
            failures.join("; ")
        },
    }
}

fn main() {
    let min = |m: u64| Duration::from_secs(60 * m);
    let mut results = Vec::new();
    results.push(criterion(1, "eps-Poisson without contamination", min(2), c1));
    let start = Instant::now();
    let (o2, o3) = c2_c3();
    let shared = start.elapsed();
    results.push(report(2, "eps-Poisson contaminated parameter error", min(5), shared, o2));
    results.push(report(3, "eps-Poisson predictive likelihood (same run)", min(5), shared, o3));
    results.push(criterion(4, "zero-inflated binomial", min(5), c4));
    results.push(criterion(5, "exact robustness bound", Duration::from_secs(1), c5));
    results.push(criterion(6, "probit with label flips", min(3), c6));
    results.push(criterion(7, "network on label flips", min(10), c7));
    results.push(criterion(8, "concentration", min(1), c8));
    results.push(criterion(9, "consistency", min(3), c9));
    results.push(criterion(10, "property suite", min(1), c10));
    let passed = results.iter().filter(|p| **p).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
