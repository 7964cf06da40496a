//! Acceptance suite: one test per criterion, each printing a single
//! `criterion N: PASS|FAIL` line with the measured values.
//!
//! Run with `cargo test -p factorguard --test acceptance`.

use std::io::Write;
use std::time::{Duration, Instant};

use factorguard::attacks::{attack, attack_dataset, AttackKind, AttackSpec};
use factorguard::evaluation::{
    cell_means, estimate_characteristics, partition_results, process_split, sweep_and_ablation, theorem2_bound,
    theorem2_check, FamilyFilter, Graphs, PipelineConfig, SweepConfig,
};
use factorguard::experiment::{cmd_run, io, ExperimentConfig, Timings};
use factorguard::factor_graph::{binarize, Assignment, FactorGraph};
use factorguard::intervention::{repair, RepairConfig};
use factorguard::rule_lang::{format_rules, parse_rules, BinOp, Expr, RuleSchema, RuleSet, Var, VarKind};
use factorguard::scoring::{conditional_probability, satisfaction_weight, IdentifyConfig};
use factorguard::synthbench::{derive_rules, gen_dataset, SynthConfig, SynthDataset};
use factorguard::weights::{mle_fit, nll_and_gradient, WeightConfig, W_MAX};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Written to the stdout handle directly so the line shows even when the
/// harness captures output of passing tests.
fn verdict(n: usize, pass: bool, detail: &str) {
    let line = format!("criterion {n}: {} {detail}\n", if pass { "PASS" } else { "FAIL" });
    std::io::stdout().lock().write_all(line.as_bytes()).unwrap();
    assert!(pass, "criterion {n} failed: {detail}");
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_var<R: Rng>(r: &mut R, m: usize, k: usize) -> Var {
    if k > 0 && r.random_bool(0.25) {
        Var::category(r.random_range(0..k))
    } else {
        Var::concept(r.random_range(0..m))
    }
}

fn random_expr<R: Rng>(r: &mut R, m: usize, k: usize, depth: usize) -> Expr {
    if depth == 0 || r.random_bool(0.3) {
        let lit = Expr::lit(random_var(r, m, k));
        return if r.random_bool(0.3) { Expr::not(lit) } else { lit };
    }
    if r.random_bool(0.15) {
        return Expr::not(random_expr(r, m, k, depth - 1));
    }
    let op = [BinOp::And, BinOp::Or, BinOp::Xor, BinOp::Iff][r.random_range(0..4)];
    Expr::bin(op, random_expr(r, m, k, depth - 1), random_expr(r, m, k, depth - 1))
}

fn build(rules: &RuleSet, m: usize, k: usize, w: &[f64]) -> FactorGraph {
    FactorGraph::build(rules, &RuleSchema::new(m, k).unwrap(), w).unwrap()
}

fn bits(mask: u64, m: usize) -> Vec<bool> {
    (0..m).map(|j| mask >> j & 1 == 1).collect()
}

/// Direct textbook enumeration: evaluates every formula from scratch and
/// normalizes with plain exponentials.
fn naive_probability(rules: &RuleSet, w: &[f64], m: usize, concepts: &[bool], category: usize) -> f64 {
    let score = |c: &[bool]| -> f64 {
        let value = |v: Var| match v.kind {
            VarKind::Concept => c[v.index],
            VarKind::Category => v.index == category,
        };
        rules.iter().zip(w).filter(|(r, _)| r.formula.eval(value)).map(|(_, w)| *w).sum()
    };
    let z: f64 = (0..1u64 << m).map(|mask| score(&bits(mask, m)).exp()).sum();
    score(concepts).exp() / z
}

#[test]
fn criterion_01_oracle_equivalence() {
    let start = Instant::now();
    let mut r = rng(1);
    let mut worst_rel = 0.0f64;
    let mut worst_sum = 0.0f64;
    for _ in 0..200 {
        let m = r.random_range(1..=10);
        let k = r.random_range(2..=4);
        let n = r.random_range(1..=20);
        let rules = RuleSet::from_formulas((0..n).map(|_| (random_expr(&mut r, m, k, 3), None)));
        let w: Vec<f64> = (0..n).map(|_| r.random_range(0.0..=1.0)).collect();
        let g = build(&rules, m, k, &w);
        let category = r.random_range(0..k);
        let concepts: Vec<bool> = (0..m).map(|_| r.random_bool(0.5)).collect();
        let a = Assignment::new(concepts.clone(), category, g.schema()).unwrap();
        let got = conditional_probability(&g, &a, 20).unwrap();
        let want = naive_probability(&rules, &w, m, &concepts, category);
        worst_rel = worst_rel.max((got - want).abs() / want);
        let total: f64 = (0..1u64 << m)
            .map(|mask| {
                conditional_probability(&g, &Assignment::new(bits(mask, m), category, g.schema()).unwrap(), 20).unwrap()
            })
            .sum();
        worst_sum = worst_sum.max((total - 1.0).abs());
    }
    let elapsed = start.elapsed();
    verdict(
        1,
        worst_rel <= 1e-12 && worst_sum <= 1e-9 && elapsed < Duration::from_secs(30),
        &format!(
            "max rel err {worst_rel:.2e} (<= 1e-12), max |sum-1| {worst_sum:.2e} (<= 1e-9), {:.2}s (< 30s)",
            elapsed.as_secs_f64()
        ),
    );
}

/// Default synthetic configuration with derived rules at unit confidence.
fn default_setup(seed: u64) -> (SynthDataset, FactorGraph) {
    let cfg = SynthConfig { seed, ..Default::default() };
    let ds = gen_dataset(&cfg).unwrap();
    let rules = derive_rules(&ds.signatures, cfg.num_concepts, 0.0, seed);
    let w = vec![1.0; rules.len()];
    let g = build(&rules, cfg.num_concepts, cfg.num_categories, &w);
    (ds, g)
}

fn spec(budget: usize, seed: u64) -> AttackSpec {
    AttackSpec { kind: AttackKind::Confounding, budget, seed, ..Default::default() }
}

#[test]
fn criterion_02_detection() {
    let start = Instant::now();
    let (ds, g) = default_setup(0);
    let pcfg = PipelineConfig::default();
    let (clean, failed) = partition_results(process_split(Graphs::same(&g), &ds.instances, &ds.signatures, &pcfg));
    assert!(failed.is_empty());
    let sr = factorguard::evaluation::summarize("clean", None, &clean, 0, &ds.signatures).unwrap().sr.unwrap();
    let mut irs = Vec::new();
    for b in 1..=4 {
        let attacked = attack_dataset(&ds.instances, &spec(b, 0), &ds.signatures);
        let (res, failed) = partition_results(process_split(Graphs::same(&g), &attacked, &ds.signatures, &pcfg));
        assert!(failed.is_empty());
        let row = factorguard::evaluation::summarize("attacked", Some(b), &res, 0, &ds.signatures).unwrap();
        irs.push((b, row.ir.unwrap_or(f64::NAN), row.counts.attacked));
    }
    let elapsed = start.elapsed();
    let ir_ok = irs.iter().all(|&(_, ir, _)| ir >= 95.0);
    let ir_text: Vec<String> = irs.iter().map(|(b, ir, n)| format!("B={b}: IR {ir:.2} over {n}")).collect();
    verdict(
        2,
        sr == 100.0 && ir_ok && elapsed < Duration::from_secs(60),
        &format!("SR {sr:.2} (== 100), {} (>= 95), {:.2}s (< 60s)", ir_text.join(", "), elapsed.as_secs_f64()),
    );
}

#[test]
fn criterion_03_non_degradation() {
    let (ds, g) = default_setup(0);
    let pcfg = PipelineConfig::default();
    let mut ok = true;
    let mut notes = Vec::new();
    for b in 1..=4 {
        let attacked = attack_dataset(&ds.instances, &spec(b, 0), &ds.signatures);
        let (res, _) = partition_results(process_split(Graphs::same(&g), &attacked, &ds.signatures, &pcfg));
        for r in &res {
            let gained = r.satisfaction_after - r.satisfaction_before;
            if gained < 0.0 || (!r.flips.is_empty() && gained <= 0.0) {
                ok = false;
            }
        }
        let m = factorguard::evaluation::summarize("attacked", Some(b), &res, 0, &ds.signatures).unwrap();
        let row_ok = m.lsm_mean > m.lsm_mean_before && m.e_acc >= m.e_acc_before && m.p_acc >= m.p_acc_before;
        ok &= row_ok;
        notes.push(format!(
            "B={b}: LSM {:.2}->{:.2}, E-ACC {:.2}->{:.2}, P-ACC {:.2}->{:.2}",
            m.lsm_mean_before, m.lsm_mean, m.e_acc_before, m.e_acc, m.p_acc_before, m.p_acc
        ));
    }
    verdict(3, ok, &notes.join("; "));
}

fn best_satisfaction(g: &FactorGraph, category: usize) -> f64 {
    let m = g.num_concepts();
    (0..1u64 << m)
        .map(|mask| satisfaction_weight(g, &Assignment::new(bits(mask, m), category, g.schema()).unwrap()))
        .fold(f64::NEG_INFINITY, f64::max)
}

#[test]
fn criterion_04_small_instance_repair() {
    let mut optimal = 0;
    let mut gaps = Vec::new();
    let cases = 100;
    for seed in 0..cases as u64 {
        let cfg = SynthConfig {
            num_categories: 4,
            num_concepts: 6,
            signature_size: 3,
            num_samples: 1,
            min_distance: 4,
            seed,
            ..Default::default()
        };
        let ds = gen_dataset(&cfg).unwrap();
        let rules = derive_rules(&ds.signatures, cfg.num_concepts, 0.0, seed);
        let mut r = rng(seed);
        let w: Vec<f64> = (0..rules.len()).map(|_| r.random_range(0.2..=1.0)).collect();
        let g = build(&rules, cfg.num_concepts, cfg.num_categories, &w);
        let inst = &ds.instances[0];
        let out = attack(&inst.activation, &spec(2, seed), &ds.signatures, 0);
        let plan =
            repair(&g, &out.activation, inst.predicted_category, &RepairConfig { force: true, ..Default::default() })
                .unwrap();
        let after = satisfaction_weight(&g, &binarize(&plan.rectified, inst.predicted_category, g.schema()).unwrap());
        let gap = best_satisfaction(&g, inst.predicted_category) - after;
        if gap <= 1e-9 {
            optimal += 1;
        } else {
            gaps.push(gap);
        }
    }
    let max_gap = gaps.iter().copied().fold(0.0, f64::max);
    verdict(
        4,
        optimal * 10 >= cases * 9,
        &format!("optimal on {optimal}/{cases} (>= 90%), {} suboptimal, max gap {max_gap:.3}", gaps.len()),
    );
}

#[test]
fn criterion_05_mle_gradient() {
    let mut r = rng(5);
    let mut worst = 0.0f64;
    let h = 1e-5;
    for _ in 0..50 {
        let (m, k) = (8, r.random_range(2..=3));
        let n = r.random_range(1..=10);
        let rules = RuleSet::from_formulas((0..n).map(|_| (random_expr(&mut r, m, k, 2), None)));
        let g = build(&rules, m, k, &vec![1.0; n]);
        let data: Vec<Assignment> = (0..r.random_range(1..=20))
            .map(|_| {
                Assignment::new((0..m).map(|_| r.random_bool(0.5)).collect(), r.random_range(0..k), g.schema()).unwrap()
            })
            .collect();
        let w: Vec<f64> = (0..n).map(|_| r.random_range(0.05..=0.95)).collect();
        let (_, grad) = nll_and_gradient(&g, &data, &w, 20).unwrap();
        for i in 0..n {
            let (mut hi, mut lo) = (w.clone(), w.clone());
            hi[i] += h;
            lo[i] -= h;
            let fd = (nll_and_gradient(&g, &data, &hi, 20).unwrap().0
                - nll_and_gradient(&g, &data, &lo, 20).unwrap().0)
                / (2.0 * h);
            worst = worst.max((grad[i] - fd).abs() / grad[i].abs().max(fd.abs()).max(1.0));
        }
    }
    let (ds, _) = default_setup(0);
    let rules = derive_rules(&ds.signatures, 10, 0.0, 0);
    let g = build(&rules, 10, 12, &vec![1.0; rules.len()]);
    let data: Vec<Assignment> = ds
        .instances
        .iter()
        .map(|i| Assignment::new(i.true_concepts.clone(), i.true_category, g.schema()).unwrap())
        .collect();
    let fit = mle_fit(&g, &data, &WeightConfig::default()).unwrap();
    let min_w = fit.weights.iter().copied().fold(f64::INFINITY, f64::min);
    verdict(
        5,
        worst < 1e-5 && min_w >= W_MAX - 1e-9,
        &format!(
            "max FD rel err {worst:.2e} (< 1e-5), min learned weight {min_w:.4} on all-satisfying data (clamp {W_MAX})"
        ),
    );
}

#[test]
fn criterion_06_bounds() {
    let zero = theorem2_bound(0, 0.9, 0.2) == 0.0;
    let increasing = (0..50).all(|n| theorem2_bound(n + 1, 0.9, 0.6) > theorem2_bound(n, 0.9, 0.6));
    let configs = 20;
    let mut passed = 0;
    let mut worst = f64::INFINITY;
    let pcfg = PipelineConfig::default();
    for seed in 0..configs {
        let (ds, g) = default_setup(seed);
        let attacked = attack_dataset(&ds.instances, &spec(2, seed), &ds.signatures);
        let (res, _) = partition_results(process_split(Graphs::same(&g), &attacked, &ds.signatures, &pcfg));
        let ch = estimate_characteristics(&g, &attacked).unwrap();
        let checks = theorem2_check(&g, &ch, &res, 0.02);
        worst = checks.iter().map(|c| c.accuracy - c.bound).fold(worst, f64::min);
        if checks.iter().all(|c| c.satisfied) {
            passed += 1;
        }
    }
    verdict(
        6,
        zero && increasing && passed == configs,
        &format!(
            "bound(0)=0: {zero}, strictly increasing: {increasing}, configs with accuracy >= bound - 0.02: {passed}/{configs}, min accuracy-bound {worst:.4}"
        ),
    );
}

fn sweep_means(ratios: Vec<f64>, families: Vec<FamilyFilter>) -> Vec<factorguard::evaluation::CellMean> {
    let (ds, g) = default_setup(0);
    let cfg = SweepConfig { ratios, families, repeats: 5 };
    let rows =
        sweep_and_ablation(&g, &ds.instances, &ds.signatures, &spec(4, 0), &PipelineConfig::default(), &cfg).unwrap();
    cell_means(&rows)
}

#[test]
fn criterion_07_ablation() {
    let means = sweep_means(Vec::new(), FamilyFilter::ALL.to_vec());
    let lsm = |f: FamilyFilter| means.iter().find(|c| c.cell == format!("family={}", f.name())).unwrap().lsm_mean;
    let (both, cat, con, none) =
        (lsm(FamilyFilter::Both), lsm(FamilyFilter::Category), lsm(FamilyFilter::Concept), lsm(FamilyFilter::None));
    verdict(
        7,
        both >= cat && cat >= none && both >= con && con >= none,
        &format!("LSM both {both:.2}, category-only {cat:.2}, concept-only {con:.2}, none {none:.2}"),
    );
}

#[test]
fn criterion_08_sweep() {
    let means = sweep_means(vec![0.25, 1.0], Vec::new());
    let acc = |r: &str| means.iter().find(|c| c.cell == format!("ratio={r}")).unwrap().e_acc;
    let (lo, hi) = (acc("0.25"), acc("1"));
    verdict(8, hi > lo, &format!("E-ACC ratio 1.0 {hi:.2} vs ratio 0.25 {lo:.2} (margin {:.2})", hi - lo));
}

/// Every one of the eight two-literal AND/OR forms over every concept pair.
fn all_binary_forms(m: usize) -> RuleSet {
    let mut formulas = Vec::new();
    for a in 0..m {
        for b in a + 1..m {
            for op in [BinOp::And, BinOp::Or] {
                for (na, nb) in [(false, false), (true, false), (false, true), (true, true)] {
                    let lit = |i: usize, neg: bool| {
                        let l = Expr::lit(Var::concept(i));
                        if neg {
                            Expr::not(l)
                        } else {
                            l
                        }
                    };
                    formulas.push((Expr::bin(op, lit(a, na), lit(b, nb)), None));
                }
            }
        }
    }
    RuleSet::from_formulas(formulas)
}

fn dense_repair(m: usize, seed: u64) -> (usize, Duration) {
    let rules = all_binary_forms(m);
    let mut r = rng(seed);
    let w: Vec<f64> = (0..rules.len()).map(|_| r.random_range(0.01..=1.0)).collect();
    let g = build(&rules, m, 2, &w);
    let act: Vec<f64> = (0..m).map(|_| r.random_range(0.0..=1.0)).collect();
    let cfg = RepairConfig { force: true, identify: IdentifyConfig::default(), ..Default::default() };
    let start = Instant::now();
    let plan = repair(&g, &act, 0, &cfg).unwrap();
    (plan.stats.cases_enumerated, start.elapsed())
}

fn median_time(m: usize) -> f64 {
    let mut t: Vec<f64> = (0..7).map(|s| dense_repair(m, s).1.as_secs_f64()).collect();
    t.sort_by(f64::total_cmp);
    t[t.len() / 2]
}

#[test]
fn criterion_09_complexity() {
    let mut bound_ok = true;
    let mut worst_ratio = 0.0f64;
    for m in [4, 6, 10, 20] {
        for seed in 0..10 {
            let (cases, _) = dense_repair(m, seed);
            let cap = 12 * m * (m - 1);
            bound_ok &= cases <= cap;
            worst_ratio = worst_ratio.max(cases as f64 / cap as f64);
        }
    }
    let (t10, t20, t40) = (median_time(10), median_time(20), median_time(40));
    let (r1, r2, r3) = (t20 / t10, t40 / t20, t40 / t10);
    verdict(
        9,
        bound_ok && r1 <= 8.0 && r2 <= 8.0 && r3 <= 32.0,
        &format!(
            "max cases/12M(M-1) {worst_ratio:.3} (<= 1); time ratios t20/t10 {r1:.2}, t40/t20 {r2:.2} (<= 8), t40/t10 {r3:.2} (<= 32)"
        ),
    );
}

fn run_in(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut cfg = ExperimentConfig { output_dir: dir.to_path_buf(), ..Default::default() };
    cfg.dataset.num_samples = 200;
    cmd_run(&cfg, &mut Timings::default()).unwrap();
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn criterion_10_determinism_and_round_trip() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (fa, fb) = (run_in(a.path()), run_in(b.path()));
    let has_reports = fa.iter().any(|(n, _)| n == io::REPORT_CSV) && fa.iter().any(|(n, _)| n == io::REPORT_JSON);
    let identical = fa == fb;

    let mut r = rng(10);
    let mut round_trips = 0;
    let sets = 1000;
    for _ in 0..sets {
        let (m, k) = (r.random_range(1..=12), r.random_range(2..=4));
        let rules = RuleSet::from_formulas((0..r.random_range(1..=8)).map(|_| {
            let conf = r.random_bool(0.5).then(|| r.random_range(0.0..=1.0));
            (random_expr(&mut r, m, k, 4), conf)
        }));
        if parse_rules(&format_rules(&rules)).ok().as_ref() == Some(&rules) {
            round_trips += 1;
        }
    }
    verdict(
        10,
        has_reports && identical && round_trips == sets,
        &format!("{} output files byte-identical across runs: {identical}; round-trips {round_trips}/{sets}", fa.len()),
    );
}
