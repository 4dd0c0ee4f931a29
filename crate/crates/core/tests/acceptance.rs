//! Acceptance runner: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use rayon::prelude::*;

use dgd_core::certificates::recursions::{GeometricRecursion, PowerRecursion};
use dgd_core::certificates::ProblemConstants;
use dgd_core::engine::{run, run_with_observer, AgentStates, LogSchedule, RunOptions};
use dgd_core::harness::config::{ExperimentConfig, GraphSpec, ScheduleSpec};
use dgd_core::harness::{certify_records, dominates, tail_slope_window};
use dgd_core::network::{spectral_gap, two_agent_matrix};
use dgd_core::objectives::eta;
use dgd_core::rng::component_seed;
use dgd_core::sharpness::{eigenvalues, eigenvalues_direct, sharpness_ratio, top_eigenvalue, SharpnessInstance};

type Outcome = Result<String, String>;

fn criterion_1() -> Outcome {
    let results: Vec<Result<(f64, f64), String>> = common::GRID_EXPONENTS
        .par_iter()
        .map(|&p| {
            let cfg = ExperimentConfig {
                seed: 1,
                graph: GraphSpec::ErdosRenyi { q: 0.5 },
                schedule: ScheduleSpec::Scaled { fraction: 0.9, w: 1e4, p },
                horizon: 1_000_000,
                ..ExperimentConfig::default()
            };
            let pr = cfg.build().map_err(|e| e.to_string())?;
            let traj = run(&pr.mixing, &pr.ensemble, &pr.initial, &pr.schedule, &pr.options)
                .map_err(|e| e.to_string())?;
            if traj.diverged() {
                return Err(format!("p={p} diverged"));
            }
            let series: Vec<(f64, f64)> =
                traj.records.iter().map(|r| (r.t as f64, r.mean_err)).collect();
            let fit = tail_slope_window(&series, 1e5, 1e6).map_err(|e| e.to_string())?;
            Ok((p, fit.slope))
        })
        .collect();
    let mut detail = vec![];
    let mut ok = true;
    for r in results {
        let (p, slope) = r?;
        ok &= (slope + p).abs() <= 0.15;
        detail.push(format!("p={p}: slope {slope:.4}"));
    }
    let detail = detail.join(", ");
    if ok { Ok(detail) } else { Err(detail) }
}

#[derive(Default)]
struct GridOutcome {
    configs: usize,
    consensus: Vec<String>,
    rate: Vec<String>,
    rate_checked: usize,
    radius: Vec<String>,
    lemmas: Vec<String>,
    steps: usize,
    worst: [f64; 3],
}

fn run_grid() -> Result<GridOutcome, String> {
    let configs = common::grid_configs().map_err(|e| e.to_string())?;
    let per: Vec<Result<(usize, Vec<String>, [Option<String>; 3], bool, [f64; 3]), String>> = configs
        .par_iter()
        .map(|cfg| {
            let pr = cfg.build().map_err(|e| format!("seed {}: {e}", cfg.seed))?;
            let e = &pr.ensemble;
            let sqrt_m_d = (e.m() as f64).sqrt() * e.d();
            let (eta, l, beta) = (eta(e.mu(), e.l()).map_err(|e| e.to_string())?, e.l(), pr.mixing.beta());
            let mut lemma_fail = vec![];
            let mut steps = 0;
            let traj = run_with_observer(&pr.mixing, e, &pr.initial, &pr.schedule, &pr.options, |v| {
                steps += 1;
                let (b, a, al) = (v.metrics_before, v.metrics_after, v.alpha);
                let rhs1 = (1.0 - eta * al) * b.mean_err + l * al * b.consensus_err + 1e-10;
                let rhs2 = (beta + l * al) * b.consensus_err + l * al * b.mean_err + sqrt_m_d * al + 1e-10;
                if a.mean_err > rhs1 && lemma_fail.len() < 3 {
                    lemma_fail.push(format!("seed {} t={}: mean step {} > {}", cfg.seed, v.t, a.mean_err, rhs1));
                }
                if a.consensus_err > rhs2 && lemma_fail.len() < 3 {
                    lemma_fail.push(format!("seed {} t={}: consensus step {} > {}", cfg.seed, v.t, a.consensus_err, rhs2));
                }
            })
            .map_err(|e| format!("seed {}: {e}", cfg.seed))?;
            if traj.diverged() {
                return Err(format!("seed {} diverged", cfg.seed));
            }
            let c = ProblemConstants::from_problem(e, &pr.mixing, &pr.schedule, &pr.initial)
                .map_err(|e| e.to_string())?;
            let (rep, _) = certify_records(&c, &traj.records).map_err(|e| e.to_string())?;
            let tag = |name: &str, ch: &dgd_core::harness::DominanceCheck| {
                (!ch.holds).then(|| {
                    format!("seed {} {name}: ratio {:.3e} first at t={:?}", cfg.seed, ch.worst_ratio, ch.first_violation)
                })
            };
            let rate_fail = match (&rep.rate, &rep.rate_unavailable) {
                (Some(ch), _) => tag("rate", ch),
                (None, Some(why)) => Some(format!("seed {} rate unavailable: {why}", cfg.seed)),
                (None, None) => Some(format!("seed {} rate missing", cfg.seed)),
            };
            let worst = [
                rep.consensus.worst_ratio,
                rep.rate.as_ref().map_or(0.0, |r| r.worst_ratio),
                rep.radius.worst_ratio,
            ];
            Ok((
                steps,
                lemma_fail,
                [tag("consensus", &rep.consensus), rate_fail, tag("radius", &rep.radius)],
                rep.rate.is_some(),
                worst,
            ))
        })
        .collect();
    let mut g = GridOutcome::default();
    for r in per {
        let (steps, lemmas, [cons, rate, radius], rate_checked, worst) = r?;
        g.configs += 1;
        g.steps += steps;
        g.lemmas.extend(lemmas);
        g.consensus.extend(cons);
        g.rate.extend(rate);
        g.radius.extend(radius);
        g.rate_checked += rate_checked as usize;
        for k in 0..3 {
            g.worst[k] = g.worst[k].max(worst[k]);
        }
    }
    Ok(g)
}

fn verdict(failures: &[String], ok_detail: String) -> Outcome {
    if failures.is_empty() { Ok(ok_detail) } else { Err(failures.join("; ")) }
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let t_max = 10_000;
    let mut checked = 0usize;
    let mut fails = vec![];
    let mut worst: f64 = 0.0;
    for &p in &[0.3, 0.7, 1.0] {
        for &w in &[1.0, 5.0] {
            for &ratio in &[0.1, 0.5] {
                let c1 = ratio * f64::powf(w, p);
                for &qm in &[0.5, 1.0, 2.0] {
                    for &c2 in &[0.1, 1.0, 10.0] {
                        for &a0 in &[0.0, 1.0, 10.0] {
                            let rec = PowerRecursion::new(c1, c2, p, qm * c1, w, a0).map_err(|e| e.to_string())?;
                            let oracle = rec.oracle(t_max);
                            let bound = rec.bound_series(t_max);
                            for t in 1..=t_max {
                                checked += 1;
                                let (b, o) = (bound[t - 1], oracle[t]);
                                if o > 0.0 {
                                    worst = worst.max(o / b);
                                }
                                if !dominates(b, o) && fails.len() < 5 {
                                    fails.push(format!("power p={p} w={w} C1={c1} q={} C2={c2} A0={a0} t={t}: {b} < {o}", qm * c1));
                                }
                            }
                        }
                    }
                }
            }
            for &ratio in &[0.1, 0.5] {
                let a = ratio * f64::powf(w, p);
                for &beta in &[0.1, 0.5, 0.9] {
                    for &b in &[0.5, 2.0] {
                        let rec = GeometricRecursion::new(a, b, w, p, beta).map_err(|e| e.to_string())?;
                        let oracle = rec.oracle(t_max);
                        let bound = rec.bound_series(t_max - 1, None).map_err(|e| e.to_string())?;
                        for t in 0..t_max {
                            checked += 1;
                            let (bd, o) = (bound[t], oracle[t + 1]);
                            if o > 0.0 {
                                worst = worst.max(o / bd);
                            }
                            if !dominates(bd, o) && fails.len() < 5 {
                                fails.push(format!("geometric p={p} w={w} a={a} beta={beta} b={b} t={}: {bd} < {o}", t + 1));
                            }
                        }
                    }
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    if secs >= 30.0 {
        fails.push(format!("grid took {secs:.1}s"));
    }
    verdict(&fails, format!("{checked} (config, t) pairs, worst oracle/bound {worst:.4}, {secs:.2}s"))
}

fn criterion_7() -> Outcome {
    let (a1, a2, gamma) = (10.0, 6.0, 0.2);
    let th = SharpnessInstance::new(a1, a2, gamma, 0.0).map_err(|e| e.to_string())?.threshold();
    if (th - 1.0 / 150.0).abs() > 1e-15 {
        return Err(format!("threshold {th}"));
    }
    let mut s0 = AgentStates::random_uniform(2, 1, 0.0, 50.0, component_seed(1, "figure2")).map_err(|e| e.to_string())?;
    let mut detail = vec![];
    let mut fails = vec![];
    for (k, expect_div) in [(1.01, true), (0.99, false)] {
        let alpha = k / 150.0;
        let inst = SharpnessInstance::new(a1, a2, gamma, alpha).map_err(|e| e.to_string())?;
        let closed = eigenvalues(&inst);
        let direct = eigenvalues_direct(&inst);
        let gap = (closed[0] - direct[0]).abs().max((closed[1] - direct[1]).abs());
        if gap > 1e-12 {
            fails.push(format!("k={k}: eigenvalue gap {gap:e}"));
        }
        if expect_div {
            // Move off the contracting eigenvector if the draw lands on it.
            let m = dgd_core::sharpness::iteration_matrix(&inst);
            let se = m.symmetric_eigen();
            let j = if se.eigenvalues[0].abs() < se.eigenvalues[1].abs() { 0 } else { 1 };
            let v = se.eigenvectors.column(j);
            let x = s0.as_slice();
            let n = (x[0] * x[0] + x[1] * x[1]).sqrt();
            let along = (x[0] * v[0] + x[1] * v[1]).abs() / n;
            if (1.0 - along).abs() < 1e-9 {
                s0 = AgentStates::new(2, 1, vec![x[0] + 1e-6, x[1]]).map_err(|e| e.to_string())?;
            }
        }
        let top = top_eigenvalue(&inst);
        let (e, w, sched) = inst.to_problem().map_err(|e| e.to_string())?;
        let opts = RunOptions::new(100_000, LogSchedule::Every { every: 1000 }).with_cap(1e6);
        let traj = run(&w, &e, &s0, &sched, &opts).map_err(|e| e.to_string())?;
        let final_norm = traj.final_states.norm();
        let closed_div = closed[0].abs().max(closed[1].abs()) > 1.0;
        let direct_div = direct[0].abs().max(direct[1].abs()) > 1.0;
        if closed_div != direct_div || closed_div != expect_div {
            fails.push(format!("k={k}: closed verdict {closed_div}, direct {direct_div}"));
        }
        if expect_div {
            if !(traj.diverged() && top > 1.0) {
                fails.push(format!("k={k}: status {:?}, top {top}", traj.status));
            }
            detail.push(format!("1.01/150 diverged at {:?}, top {top:.8}", traj.status));
        } else {
            if traj.diverged() || !(final_norm < 1e-6) || !(top < 1.0) {
                fails.push(format!("k={k}: |x(T)| = {final_norm:e}, top {top}"));
            }
            detail.push(format!("0.99/150 |x(1e5)| = {final_norm:.3e}, top {top:.8}"));
        }
    }
    verdict(&fails, detail.join("; "))
}

fn criterion_8() -> Outcome {
    let mut detail = vec![];
    let mut ok = true;
    for (mu, l) in [(0.01, 10.0), (1.0, 1e3)] {
        let r = sharpness_ratio(mu, l, 0.2).map_err(|e| e.to_string())?;
        ok &= (r.ratio - 1.0).abs() <= 1e-2;
        detail.push(format!("(mu={mu}, L={l}): {:.6}", r.ratio));
    }
    let detail = detail.join(", ");
    if ok { Ok(detail) } else { Err(detail) }
}

fn criterion_9() -> Outcome {
    let e = eta(0.6961, 17.1256).map_err(|e| e.to_string())?;
    let gap = spectral_gap(&two_agent_matrix(0.2).map_err(|e| e.to_string())?);
    let detail = format!("eta {e:.6}, two-agent beta {gap:.15}");
    if (e - 0.6689).abs() <= 5e-5 && (gap - 0.6).abs() <= 1e-12 { Ok(detail) } else { Err(detail) }
}

fn property<S: Strategy>(
    name: &str,
    cases: u32,
    strat: S,
    check: impl Fn(S::Value) -> Result<(), String>,
) -> Result<String, String> {
    let mut runner = TestRunner::new(Config { cases, failure_persistence: None, ..Config::default() });
    runner
        .run(&strat, |v| check(v).map_err(TestCaseError::fail))
        .map(|_| format!("{name} {cases} cases"))
        .map_err(|e| format!("{name}: {e}"))
}

fn criterion_10() -> Outcome {
    let results = [
        property("pythagorean", 256, (2usize..12, 1usize..5, any::<u64>(), -3i32..4), |(m, d, s, k)| {
            common::check_pythagorean(m, d, s, 10f64.powi(k))
        }),
        property("average dynamics", 256, (0usize..4, 3usize..12, any::<u64>(), 0.01f64..1.0), |(k, m, s, f)| {
            common::check_average_residual(k, m, s, f)
        }),
        property("stochasticity", 256, (0usize..4, 2usize..40, any::<u64>()), |(k, m, s)| {
            common::check_stochastic(k, m, s)
        }),
        property("determinism", 100, (any::<u64>(), 0usize..4, 0usize..4, 20usize..300), |(s, k, p, h)| {
            common::check_determinism(s, k, p, h)
        }),
    ];
    let mut ok = vec![];
    let mut bad = vec![];
    for r in results {
        match r {
            Ok(s) => ok.push(s),
            Err(s) => bad.push(s),
        }
    }
    if bad.is_empty() { Ok(ok.join(", ")) } else { Err(bad.join("; ")) }
}

fn main() -> ExitCode {
    let mut all_ok = true;
    let mut report = |n: usize, title: &str, o: Outcome, secs: f64| {
        let (tag, detail) = match o {
            Ok(d) => ("PASS", d),
            Err(d) => {
                all_ok = false;
                ("FAIL", d)
            }
        };
        println!("{tag} criterion {n}: {title} ({detail}) [{secs:.1}s]");
    };

    let t = Instant::now();
    report(1, "tail slope of the optimality gap is -p", criterion_1(), t.elapsed().as_secs_f64());

    let t = Instant::now();
    match run_grid() {
        Ok(g) => {
            let secs = t.elapsed().as_secs_f64();
            let n = g.configs;
            report(2, "consensus envelope dominates", verdict(&g.consensus, format!("{n} configs, worst ratio {:.3e}", g.worst[0])), secs);
            report(3, "rate envelope dominates", verdict(&g.rate, format!("{n} configs, {} with rate envelope, worst ratio {:.3e}", g.rate_checked, g.worst[1])), secs);
            report(4, "uniform radius bounds hold", verdict(&g.radius, format!("{n} configs, worst ratio {:.3e}", g.worst[2])), secs);
            report(5, "per-step optimality and consensus estimates hold", verdict(&g.lemmas, format!("{} steps", g.steps)), secs);
        }
        Err(e) => {
            let secs = t.elapsed().as_secs_f64();
            for (n, title) in [(2, "consensus envelope dominates"), (3, "rate envelope dominates"), (4, "uniform radius bounds hold"), (5, "per-step estimates hold")] {
                report(n, title, Err(e.clone()), secs);
            }
        }
    }

    let t = Instant::now();
    report(6, "recursion bounds dominate their equality oracles", criterion_6(), t.elapsed().as_secs_f64());
    let t = Instant::now();
    report(7, "two-agent bifurcation at 1/150", criterion_7(), t.elapsed().as_secs_f64());
    let t = Instant::now();
    report(8, "stepsize bound ratio tends to one", criterion_8(), t.elapsed().as_secs_f64());
    let t = Instant::now();
    report(9, "printed constants", criterion_9(), t.elapsed().as_secs_f64());
    let t = Instant::now();
    report(10, "structural property suites", criterion_10(), t.elapsed().as_secs_f64());

    if all_ok { ExitCode::SUCCESS } else { ExitCode::FAILURE }
}

