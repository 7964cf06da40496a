//! CSV renderings. Floats use fixed precision so identical runs give
//! byte-identical files; absent values are empty cells.

use std::fmt::Write;

use crate::evaluation::{CellMean, ConceptBoundCheck, MetricsReport, SweepRow};

fn f(v: f64) -> String {
    format!("{v:.4}")
}

fn opt(v: Option<f64>) -> String {
    v.map(f).unwrap_or_default()
}

fn budget(b: Option<usize>) -> String {
    b.map(|b| b.to_string()).unwrap_or_default()
}

pub const METRICS_HEADER: &str = "label,B (ε-analogue),lsm,lsm_before,ir,sr,e_acc,e_acc_before,p_acc,p_acc_before,\
total,clean,attacked,flagged,passed,repaired,failed";

fn metrics_fields(m: &MetricsReport) -> String {
    let c = &m.counts;
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        budget(m.budget),
        f(m.lsm_mean),
        f(m.lsm_mean_before),
        opt(m.ir),
        opt(m.sr),
        f(m.e_acc),
        f(m.e_acc_before),
        f(m.p_acc),
        f(m.p_acc_before),
        c.total,
        c.clean,
        c.attacked,
        c.flagged,
        c.passed,
        c.repaired,
        c.failed
    )
}

pub fn metrics_csv(rows: &[MetricsReport]) -> String {
    let mut out = format!("{METRICS_HEADER}\n");
    for m in rows {
        writeln!(out, "{},{}", m.label, metrics_fields(m)).unwrap();
    }
    out
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = format!("cell,ratio,family,repeat,active_factors,{}\n", &METRICS_HEADER["label,".len()..]);
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.cell(),
            opt(r.ratio),
            r.family.map(|f| f.name()).unwrap_or_default(),
            r.repeat,
            r.active_factors,
            metrics_fields(&r.metrics)
        )
        .unwrap();
    }
    out
}

pub fn cell_means_csv(means: &[CellMean]) -> String {
    let mut out = String::from("cell,repeats,lsm,e_acc,p_acc,ir\n");
    for m in means {
        writeln!(out, "{},{},{},{},{},{}", m.cell, m.repeats, f(m.lsm_mean), f(m.e_acc), f(m.p_acc), opt(m.ir))
            .unwrap();
    }
    out
}

pub fn concept_checks_csv(checks: &[(usize, Vec<ConceptBoundCheck>)]) -> String {
    let mut out =
        String::from("B (ε-analogue),concept,factors,theta_t,theta_f,bound,assumption_holds,accuracy,satisfied\n");
    for (b, rows) in checks {
        for c in rows {
            writeln!(
                out,
                "{b},{},{},{},{},{},{},{},{}",
                c.concept,
                c.factors,
                f(c.theta_t),
                f(c.theta_f),
                f(c.bound),
                c.assumption_holds,
                f(c.accuracy),
                c.satisfied
            )
            .unwrap();
        }
    }
    out
}

/// Factor-count bound table: one row per (budget, N).
pub fn bound_table_csv(rows: &[(usize, usize, f64, f64, f64)]) -> String {
    let mut out = String::from("B (ε-analogue),n,theta_t,theta_f,bound,assumption_holds\n");
    for &(b, n, t, fl, bound) in rows {
        writeln!(out, "{b},{n},{},{},{},{}", f(t), f(fl), f(bound), t > fl).unwrap();
    }
    out
}
