use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use chronos_cli::pipeline::{run_pipeline, PipelineConfig, PipelineOutput, ARTIFACTS};
use chronos_core::chronology::{
    build_qp, canonical_solve, constraint_violations, pin_document, sample_lifespans, ChronologyParams, LifespanPrior,
};
use chronos_core::corpus::{attestation_pairs, Attestation, Corpus, IndividualRecord, NameEntry, RecordRef};
use chronos_core::genealogy::{build_initial_trees, trees_consistent, unify_trees};
use chronos_core::growth::{compare_models, fit_logistic_mle, logistic_gradient, logistic_loglik, verify_logistic_ode};
use chronos_core::identity::{resolve_identities, IdentityConfig, PersonRegistry};
use chronos_core::synth::{generate_society, GroundTruth, SynthConfig};
use chronos_qp::{enumerate_active_set_oracle, kkt_residuals, solve_qp, QpProblem, Status};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

/// Random feasible bounded QP. `flat` removes one or two directions from the
/// Hessian and keeps the cost in its range.
fn random_qp(seed: u64, flat: bool) -> QpProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=12usize);
    let m = rng.random_range(1..=20usize);
    let k = if flat { n - rng.random_range(1..=2usize.min(n - 1)) } else { n };
    let vs: Vec<Vec<f64>> = (0..k).map(|_| (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    let mut q = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = vs.iter().map(|v| v[i] * v[j]).sum();
            q[i][j] = s;
            q[j][i] = s;
        }
        if !flat {
            q[i][i] += 0.5;
        }
    }
    let c: Vec<f64> = if flat {
        let g: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        (0..n).map(|i| (0..n).map(|j| q[i][j] * g[j]).sum()).collect()
    } else {
        (0..n).map(|_| rng.random_range(-10.0..10.0)).collect()
    };
    let x0: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
    let (mut a, mut l, mut u) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..m {
        let cols: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.4)).collect();
        let cols = if cols.is_empty() { vec![rng.random_range(0..n)] } else { cols };
        let mut at = 0.0;
        for &j in &cols {
            let v = rng.random_range(-1.5..1.5);
            a.push((i, j, v));
            at += v * x0[j];
        }
        let (lo, hi) = match rng.random_range(0..6u8) {
            0 => (at, at),
            1 => (f64::NEG_INFINITY, at + rng.random_range(0.0..2.0)),
            2 => (at - rng.random_range(0.0..2.0), f64::INFINITY),
            _ => (at - rng.random_range(0.0..2.0), at + rng.random_range(0.0..2.0)),
        };
        l.push(lo);
        u.push(hi);
    }
    let trip: Vec<(usize, usize, f64)> =
        (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).filter(|&(i, j)| q[i][j] != 0.0).map(|(i, j)| (i, j, q[i][j])).collect();
    QpProblem::from_triplets(n, &trip, c, &a, l, u).expect("valid random problem")
}

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let (mut solver_time, mut oracle_time) = (Duration::ZERO, Duration::ZERO);
    let (mut worst_obj, mut worst_kkt, mut bad) = (0.0f64, 0.0f64, Vec::new());
    let seeds = (0..100u64).map(|s| (s, false)).chain((1000..1100u64).map(|s| (s, true)));
    for (seed, flat) in seeds {
        let p = random_qp(seed, flat);
        let t0 = Instant::now();
        let s = solve_qp(&p, 1e-7, 200_000).unwrap();
        let t1 = Instant::now();
        let o = enumerate_active_set_oracle(&p).unwrap();
        solver_time += t1 - t0;
        oracle_time += t1.elapsed();
        let k = kkt_residuals(&p, &s.x, &s.y).max();
        let d = rel(s.objective, o.objective);
        worst_obj = worst_obj.max(d);
        worst_kkt = worst_kkt.max(k);
        if s.status != Status::Optimal || d > 1e-6 || k > 1e-6 {
            bad.push(seed);
        }
    }
    let t = start.elapsed();
    verdict(
        bad.is_empty() && t <= Duration::from_secs(30),
        format!(
            "200 QPs, worst objective gap {worst_obj:.2e}, worst KKT {worst_kkt:.2e}, {:.1} s total (solver {:.1} s, oracle {:.1} s), failing seeds {bad:?}",
            t.as_secs_f64(),
            solver_time.as_secs_f64(),
            oracle_time.as_secs_f64()
        ),
    )
}

fn one_person_two_documents() -> Corpus {
    let ind = IndividualRecord {
        local_index: 1,
        kin: Vec::new(),
        attestations: vec![
            Attestation { doc: "D1".into(), lines: vec![20] },
            Attestation { doc: "D2".into(), lines: vec![20] },
        ],
        roles: BTreeSet::new(),
    };
    let e = NameEntry { name_key: "A".into(), spellings: vec!["A".into()], individuals: vec![ind] };
    Corpus::new(vec![e], 10).unwrap()
}

fn criterion_2() -> Verdict {
    // D1 = 100 and D2 = 160 with g_p = 10 force a lifespan of at least 70
    // against a prior of 40: (70 − 40)² = 900.
    let c = one_person_two_documents();
    let r = resolve_identities(&c, &IdentityConfig::default());
    let params = ChronologyParams { anchor_doc: "D1".into(), ..ChronologyParams::default() };
    let mut p = build_qp(&r, &c, &LifespanPrior { mu: vec![40.0] }, &params).unwrap();
    pin_document(&mut p, "D2", 160.0).unwrap();
    let t = canonical_solve(&p).unwrap();
    let gap = (t.lifespan_objective - 900.0).abs();
    verdict(gap <= 1e-4, format!("objective {:.8}, |gap| {gap:.2e}", t.lifespan_objective))
}

fn criterion_3(run: &PipelineOutput, params: &ChronologyParams) -> Verdict {
    let mut worst = 0.0f64;
    let mut anchor_err = 0.0f64;
    for t in &run.ensemble.timelines {
        let publication: BTreeMap<String, f64> = t.documents.iter().cloned().zip(t.publication.iter().copied()).collect();
        let v = constraint_violations(&run.registry, params, &t.birth, &t.death, &publication);
        worst = worst.max(v.parent).max(v.attestation);
        anchor_err = anchor_err.max((publication[&params.anchor_doc] - 100.0).abs());
    }
    let n = run.ensemble.timelines.len();
    verdict(
        n == 10 && worst <= 1e-6 && anchor_err <= 1e-8,
        format!("{n} timelines, worst (I)(II) violation {worst:.2e}, anchor error {anchor_err:.2e}"),
    )
}

fn criterion_4() -> Verdict {
    let mut bad = Vec::new();
    for seed in 0..50u64 {
        let cfg = SynthConfig {
            persons: 60 + 5 * seed as usize,
            n_documents: 20 + (seed as usize % 4) * 10,
            duplicate_rate: if seed % 2 == 0 { 0.0 } else { 0.1 },
            seed,
            ..SynthConfig::default()
        };
        let (c, _) = generate_society(&cfg).unwrap();
        let r = resolve_identities(&c, &IdentityConfig::default());
        let links: usize = r.persons.iter().map(|p| usize::from(p.father.is_some()) + usize::from(p.mother.is_some())).sum();
        let pairs: usize = r.persons.iter().map(|p| p.documents.len()).sum();
        if cfg.duplicate_rate == 0.0 && pairs != attestation_pairs(&c).len() {
            bad.push(seed);
            continue;
        }
        let anchor = c.documents.iter().next().unwrap().clone();
        let params = ChronologyParams { anchor_doc: anchor, ..ChronologyParams::default() };
        let p = build_qp(&r, &c, &sample_lifespans(r.len(), (20.0, 60.0), seed), &params).unwrap();
        if p.qp.n() != 2 * r.len() + c.documents.len() || p.qp.m() != 2 * links + 2 * pairs + 1 {
            bad.push(seed);
        }
    }
    verdict(bad.is_empty(), format!("50 corpora, mismatching seeds {bad:?}"))
}

fn record_owner(truth: &GroundTruth) -> BTreeMap<RecordRef, usize> {
    let mut out = BTreeMap::new();
    for (i, p) in truth.persons.iter().enumerate() {
        for &l in &p.records {
            out.insert(RecordRef { name_key: p.name_key.clone(), local_index: l }, i);
        }
    }
    out
}

fn criterion_5() -> Verdict {
    let (mut r1, mut r1_found, mut r2, mut r2_found) = (0, 0, 0, 0);
    let (mut merged_pairs, mut true_pairs) = (0usize, 0usize);
    let mut two_doc_merges = 0;
    for seed in 0..10u64 {
        let (c, truth) = generate_society(&SynthConfig { seed, ..SynthConfig::default() }).unwrap();
        let r = resolve_identities(&c, &IdentityConfig::default());
        for d in &truth.duplicates {
            let same = r.person_of(&d.original).is_some() && r.person_of(&d.original) == r.person_of(&d.duplicate);
            match d.rule {
                chronos_core::identity::Rule::R1 => {
                    r1 += 1;
                    r1_found += usize::from(same);
                }
                chronos_core::identity::Rule::R2 => {
                    r2 += 1;
                    r2_found += usize::from(same);
                }
            }
        }
        let owner = record_owner(&truth);
        for p in &r.persons {
            let refs: Vec<RecordRef> =
                p.records.iter().map(|&l| RecordRef { name_key: p.name_key.clone(), local_index: l }).collect();
            for (i, a) in refs.iter().enumerate() {
                for b in &refs[i + 1..] {
                    merged_pairs += 1;
                    true_pairs += usize::from(owner[a] == owner[b]);
                    let docs = |x: &RecordRef| -> BTreeSet<String> {
                        c.record(x).unwrap().attestations.iter().map(|t| t.doc.clone()).collect()
                    };
                    if owner[a] != owner[b] && docs(a).intersection(&docs(b)).count() == 2 {
                        two_doc_merges += 1;
                    }
                }
            }
        }
        for (a, b) in &truth.near_misses {
            if r.person_of(a) == r.person_of(b) {
                two_doc_merges += 1;
            }
        }
    }
    let recall1 = r1_found as f64 / r1.max(1) as f64;
    let recall2 = r2_found as f64 / r2.max(1) as f64;
    let precision = if merged_pairs == 0 { 1.0 } else { true_pairs as f64 / merged_pairs as f64 };
    verdict(
        r1 > 0 && r2 > 0 && recall1 >= 0.95 && recall2 >= 0.95 && precision >= 0.99 && two_doc_merges == 0,
        format!(
            "R1 recall {recall1:.3} ({r1_found}/{r1}), R2 recall {recall2:.3} ({r2_found}/{r2}), precision {precision:.4}, two-document merges {two_doc_merges}"
        ),
    )
}

fn criterion_6() -> Verdict {
    let mut consistent_pairs = 0;
    let mut conservation_ok = true;
    let mut forests = 0;
    for seed in 0..10u64 {
        let (c, _) = generate_society(&SynthConfig { seed, ..SynthConfig::default() }).unwrap();
        let r: PersonRegistry = resolve_identities(&c, &IdentityConfig::default());
        let initial = build_initial_trees(&r);
        let before: Vec<usize> = initial.iter().flat_map(|t| t.members.iter().copied()).collect();
        let out = unify_trees(initial, &r);
        let after: Vec<usize> = out.iter().flat_map(|t| t.members.iter().copied()).collect();
        let (mut b, mut a) = (before.clone(), after.clone());
        b.sort_unstable();
        a.sort_unstable();
        conservation_ok &= a == b && a.len() == r.len() && a.windows(2).all(|w| w[0] != w[1]);
        for i in 0..out.len() {
            for j in i + 1..out.len() {
                if trees_consistent(&out[i], &out[j], &r).is_some() {
                    consistent_pairs += 1;
                }
            }
        }
        forests += 1;
    }
    verdict(
        consistent_pairs == 0 && conservation_ok,
        format!("{forests} forests, consistent output pairs {consistent_pairs}, members conserved {conservation_ok}"),
    )
}

fn logistic_draws(n: usize, mu: f64, beta: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let p: f64 = rng.random_range(f64::EPSILON..1.0);
            mu + beta * (p / (1.0 - p)).ln()
        })
        .collect()
}

fn normal_draws(n: usize, mu: f64, sigma: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let u1: f64 = rng.random_range(f64::EPSILON..1.0);
            let u2: f64 = rng.random_range(0.0..1.0);
            mu + sigma * (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
        })
        .collect()
}

fn criterion_7() -> Verdict {
    let xs = logistic_draws(10_000, 100.0, 8.0, 2024);
    let fit = fit_logistic_mle(&xs).unwrap();
    let fit_ok = (99.5..=100.5).contains(&fit.mu) && (7.7..=8.3).contains(&fit.beta);

    let mut grad_err = 0.0f64;
    for (mu, beta) in [(100.0, 8.0), (97.0, 9.5), (103.0, 6.5)] {
        let g = logistic_gradient(&xs, mu, beta);
        // Central differences per sample, summed, so cancellation stays at
        // the scale of one log density rather than the whole sum.
        let h = 1e-4;
        let one = |x: f64, m: f64, b: f64| logistic_loglik(&[x], m, b);
        let fd_mu: f64 = xs.iter().map(|&x| (one(x, mu + h, beta) - one(x, mu - h, beta)) / (2.0 * h)).sum();
        let fd_beta: f64 = xs.iter().map(|&x| (one(x, mu, beta + h) - one(x, mu, beta - h)) / (2.0 * h)).sum();
        grad_err = grad_err.max(rel(g[0], fd_mu)).max(rel(g[1], fd_beta));
    }

    let grid: Vec<f64> = (0..=200).map(|i| 60.0 + 0.4 * i as f64).collect();
    let at_h = verify_logistic_ode(100.0, 8.0, &grid, 1e-4);
    let coarse: Vec<f64> = [4e-2, 2e-2, 1e-2].iter().map(|&h| verify_logistic_ode(100.0, 8.0, &grid, h)).collect();
    let orders: Vec<f64> = coarse.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let order_ok = orders.iter().all(|o| (1.8..=2.2).contains(o));
    verdict(
        fit_ok && grad_err <= 1e-6 && at_h <= 1e-7 && order_ok,
        format!(
            "mu {:.3} beta {:.3}, gradient rel err {grad_err:.2e}, ODE residual {at_h:.2e} at h=1e-4, observed orders {:.2?}",
            fit.mu, fit.beta, orders
        ),
    )
}

fn criterion_8() -> Verdict {
    let (mut logistic_wins, mut normal_wins) = (0, 0);
    for seed in 0..10u64 {
        let l = compare_models(&logistic_draws(2000, 100.0, 8.0, 500 + seed), None).unwrap();
        let n = compare_models(&normal_draws(2000, 100.0, 14.0, 900 + seed), None).unwrap();
        logistic_wins += usize::from(l.delta_loglik > 0.0);
        normal_wins += usize::from(n.delta_loglik < 0.0);
    }
    verdict(
        logistic_wins >= 9 && normal_wins >= 9,
        format!("logistic preferred on logistic data {logistic_wins}/10, normal on normal data {normal_wins}/10"),
    )
}

fn criterion_9(run: &PipelineOutput, elapsed: Duration) -> Verdict {
    let truth = run.truth.as_ref().unwrap();
    let first = &run.ensemble.timelines[0];
    let shift = 100.0 - truth.publication[&run.anchor_doc];
    let errors: Vec<f64> = first
        .documents
        .iter()
        .enumerate()
        .filter(|(k, d)| first.document_anchored[*k] && **d != run.anchor_doc)
        .map(|(k, d)| (run.ensemble.publication[k].mean - (truth.publication[d] + shift)).abs())
        .collect();
    let mae = errors.iter().sum::<f64>() / errors.len() as f64;
    let (mu_star, beta_star) = truth.law;
    // Fisher information for the logistic location is n / (3β²).
    let n = run.fit.n as f64;
    let se = beta_star * 3f64.sqrt() / n.sqrt();
    let mu_err = run.fit.logistic.mu - (mu_star + shift);
    verdict(
        mae <= 4.0 && mu_err.abs() <= 3.0 * se && elapsed <= Duration::from_secs(300),
        format!(
            "MAE {mae:.3} over {} anchored documents, mu error {mu_err:.3} (3 SE = {:.3}), runtime {:.1} s",
            errors.len(),
            3.0 * se,
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_10(a: &Path, b: &Path) -> Verdict {
    let mut differing = Vec::new();
    for name in ARTIFACTS.iter().chain(&["corpus.jsonl", "truth.json", "recovery.json"]) {
        if fs::read(a.join(name)).ok() != fs::read(b.join(name)).ok() {
            differing.push(*name);
        }
    }
    verdict(differing.is_empty(), format!("{} artifacts compared, differing {differing:?}", ARTIFACTS.len() + 3))
}

fn default_run(out: &Path) -> (PipelineOutput, Duration) {
    let cfg = PipelineConfig {
        synth: Some(SynthConfig::default()),
        out_dir: out.to_owned(),
        log_level: "warn".into(),
        ..PipelineConfig::default()
    };
    let start = Instant::now();
    let run = run_pipeline(&cfg).expect("default pipeline runs");
    (run, start.elapsed())
}

fn main() -> ExitCode {
    let mut results: Vec<(u32, Verdict)> = Vec::new();
    let mut report = |n: u32, v: Verdict| {
        println!("criterion {n}: {} | {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        results.push((n, v));
    };
    report(1, criterion_1());
    report(2, criterion_2());
    let (dir_a, dir_b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let (run, elapsed) = default_run(dir_a.path());
    let params = ChronologyParams { anchor_doc: run.anchor_doc.clone(), ..ChronologyParams::default() };
    report(3, criterion_3(&run, &params));
    report(4, criterion_4());
    report(5, criterion_5());
    report(6, criterion_6());
    report(7, criterion_7());
    report(8, criterion_8());
    report(9, criterion_9(&run, elapsed));
    default_run(dir_b.path());
    report(10, criterion_10(dir_a.path(), dir_b.path()));

    let failed: Vec<u32> = results.iter().filter(|(_, v)| !v.pass).map(|(n, _)| *n).collect();
    println!("acceptance: {}/{} criteria pass", results.len() - failed.len(), results.len());
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
