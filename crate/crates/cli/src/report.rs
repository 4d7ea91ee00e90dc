//! CSV rows, seed means, the markdown table and the ordering verdicts.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use hamnet::Algorithm;

use crate::grid::RunRecord;

/// Bumped whenever a column is added, removed or reinterpreted.
pub const CSV_SCHEMA_VERSION: u32 = 1;
pub const CSV_HEADER: &str = "algo,M,seed,accuracy,mi_bits_stdnormal,mi_bits_marginal,nonsilent,C_S";

pub fn csv_row(r: &RunRecord) -> String {
    let c = r.cell;
    match &r.report {
        Ok(rep) => format!(
            "{},{},{},{},{},{},{},{}",
            c.algorithm,
            c.hidden,
            c.seed,
            rep.test_accuracy,
            rep.mi.standard.bits,
            rep.mi.marginal.bits,
            rep.nonsilent,
            rep.c_s
        ),
        Err(_) => format!("{},{},{},FAILED,,,,", c.algorithm, c.hidden, c.seed),
    }
}

/// Seed means of one (algorithm, M) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellMean {
    pub algorithm: Algorithm,
    pub hidden: usize,
    /// Seeds that finished; means are over these only.
    pub runs: usize,
    pub failed: usize,
    pub accuracy: f64,
    pub mi_standard: f64,
    pub mi_marginal: f64,
    pub nonsilent: f64,
    pub c_s: f64,
    pub c_s_marginal: f64,
}

impl CellMean {
    pub fn is_failed(&self) -> bool {
        self.runs == 0
    }
}

pub fn cell_means(records: &[RunRecord]) -> Vec<CellMean> {
    let mut groups: BTreeMap<(usize, usize), Vec<&RunRecord>> = BTreeMap::new();
    let order = |a: Algorithm| Algorithm::ALL.iter().position(|&x| x == a).unwrap_or(0);
    for r in records {
        groups
            .entry((r.cell.hidden, order(r.cell.algorithm)))
            .or_default()
            .push(r);
    }
    groups
        .into_values()
        .map(|rs| {
            let ok: Vec<_> = rs.iter().filter_map(|r| r.report.as_ref().ok()).collect();
            let n = ok.len() as f64;
            let mean = |f: &dyn Fn(&hamnet::metrics::CapacityReport) -> f64| {
                if ok.is_empty() {
                    f64::NAN
                } else {
                    ok.iter().map(|r| f(r)).sum::<f64>() / n
                }
            };
            CellMean {
                algorithm: rs[0].cell.algorithm,
                hidden: rs[0].cell.hidden,
                runs: ok.len(),
                failed: rs.len() - ok.len(),
                accuracy: mean(&|r| r.test_accuracy),
                mi_standard: mean(&|r| r.mi.standard.bits),
                mi_marginal: mean(&|r| r.mi.marginal.bits),
                nonsilent: mean(&|r| r.nonsilent as f64),
                c_s: mean(&|r| r.c_s),
                c_s_marginal: mean(&|r| r.c_s_marginal),
            }
        })
        .collect()
}

fn mean_row(m: &CellMean) -> String {
    if m.is_failed() {
        return format!("{},{},mean,FAILED,,,,", m.algorithm, m.hidden);
    }
    format!(
        "{},{},mean,{},{},{},{},{}",
        m.algorithm, m.hidden, m.accuracy, m.mi_standard, m.mi_marginal, m.nonsilent, m.c_s
    )
}

/// Schema comment, header, one row per run, then one `mean` row per cell.
pub fn render_csv(records: &[RunRecord]) -> String {
    let mut out = format!("# hamnet csv schema {CSV_SCHEMA_VERSION}\n{CSV_HEADER}\n");
    for r in records {
        out.push_str(&csv_row(r));
        out.push('\n');
    }
    for m in cell_means(records) {
        out.push_str(&mean_row(&m));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

fn verdict(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        name: name.into(),
        pass,
        detail: detail.into(),
    }
}

fn find(means: &[CellMean], algo: Algorithm, m: usize) -> Option<&CellMean> {
    means
        .iter()
        .find(|c| c.algorithm == algo && c.hidden == m && !c.is_failed())
}

fn strictly_decreasing(values: [f64; 3]) -> bool {
    values[0] > values[1] && values[1] > values[2]
}

/// Checks of the published Table-2 pattern. Needs the network input size to
/// know the full synapse count `inputs·M`.
pub fn verdicts(records: &[RunRecord], inputs: usize) -> Vec<Verdict> {
    use Algorithm::{Bio, Bp, Chorowski};
    let means = cell_means(records);
    let mut sizes: Vec<usize> = means.iter().map(|c| c.hidden).collect();
    sizes.sort_unstable();
    sizes.dedup();
    let mut out = Vec::new();

    for &m in &sizes {
        let (bio, bp, ch) = (find(&means, Bio, m), find(&means, Bp, m), find(&means, Chorowski, m));
        if let Some(bp) = bp {
            out.push(verdict(
                format!("accuracy(bp) >= 0.985 at M={m}"),
                bp.accuracy >= 0.985,
                format!("{:.4}", bp.accuracy),
            ));
        }
        if let Some(ch) = ch {
            out.push(verdict(
                format!("accuracy(chorowski) >= 0.975 at M={m}"),
                ch.accuracy >= 0.975,
                format!("{:.4}", ch.accuracy),
            ));
        }
        if let (Some(bio), Some(bp), Some(ch)) = (bio, bp, ch) {
            out.push(verdict(
                format!("C_S(bio) > C_S(chorowski) > C_S(bp) at M={m}"),
                strictly_decreasing([bio.c_s, ch.c_s, bp.c_s]),
                format!("{:.3e} / {:.3e} / {:.3e}", bio.c_s, ch.c_s, bp.c_s),
            ));
            out.push(verdict(
                format!("C_S(bio) > C_S(chorowski) > C_S(bp) at M={m}, marginal MI"),
                strictly_decreasing([bio.c_s_marginal, ch.c_s_marginal, bp.c_s_marginal]),
                format!(
                    "{:.3e} / {:.3e} / {:.3e}",
                    bio.c_s_marginal, ch.c_s_marginal, bp.c_s_marginal
                ),
            ));
            out.push(verdict(
                format!("I(bp) > I(chorowski) > I(bio) at M={m}"),
                strictly_decreasing([bp.mi_standard, ch.mi_standard, bio.mi_standard]),
                format!("{:.2} / {:.2} / {:.2} bits", bp.mi_standard, ch.mi_standard, bio.mi_standard),
            ));
            out.push(verdict(
                format!("I(bp) > I(chorowski) > I(bio) at M={m}, marginal MI"),
                strictly_decreasing([bp.mi_marginal, ch.mi_marginal, bio.mi_marginal]),
                format!("{:.2} / {:.2} / {:.2} bits", bp.mi_marginal, ch.mi_marginal, bio.mi_marginal),
            ));
        }
    }

    let bio_acc: Vec<(usize, f64)> = sizes
        .iter()
        .filter_map(|&m| find(&means, Bio, m).map(|c| (m, c.accuracy)))
        .collect();
    if bio_acc.len() >= 2 {
        let increasing = bio_acc.windows(2).all(|w| w[1].1 > w[0].1);
        let trail: Vec<String> = bio_acc.iter().map(|(m, a)| format!("{m}:{a:.4}")).collect();
        out.push(verdict(
            "accuracy(bio) strictly increasing in M",
            increasing,
            trail.join(" "),
        ));
    }
    if let (Some(b30), Some(b200)) = (find(&means, Bio, 30), find(&means, Bio, 200)) {
        out.push(verdict(
            "accuracy(bio) >= 0.90 at M=200",
            b200.accuracy >= 0.90,
            format!("{:.4}", b200.accuracy),
        ));
        out.push(verdict(
            "accuracy(bio, M=200) - accuracy(bio, M=30) >= 0.05",
            b200.accuracy - b30.accuracy >= 0.05,
            format!("{:+.4}", b200.accuracy - b30.accuracy),
        ));
    }

    // Per-seed synapse counts.
    let count = |algo: Algorithm, m: usize, seed: u64| {
        records
            .iter()
            .find(|r| r.cell.algorithm == algo && r.cell.hidden == m && r.cell.seed == seed)
            .and_then(|r| r.report.as_ref().ok())
            .map(|rep| rep.nonsilent)
    };
    let mut seeds: Vec<u64> = records.iter().map(|r| r.cell.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    for &m in &sizes {
        let full = inputs * m;
        for &seed in &seeds {
            if let Some(bp) = count(Bp, m, seed) {
                out.push(verdict(
                    format!("nonsilent(bp) == {full} at M={m}, seed {seed}"),
                    bp == full,
                    bp.to_string(),
                ));
            }
            if let (Some(bio), Some(ch)) = (count(Bio, m, seed), count(Chorowski, m, seed)) {
                out.push(verdict(
                    format!("nonsilent(bio) < nonsilent(chorowski) < {full} at M={m}, seed {seed}"),
                    bio < ch && ch < full,
                    format!("{bio} / {ch}"),
                ));
            }
            if let Some(bio) = count(Bio, m, seed) {
                out.push(verdict(
                    format!("100 <= nonsilent(bio) <= 5000 at M={m}, seed {seed}"),
                    (100..=5000).contains(&bio),
                    bio.to_string(),
                ));
            }
        }
    }
    out
}

fn fmt_cs(v: f64) -> String {
    format!("{v:.2e}")
}

/// Seed-mean table in the layout of the published results table, followed by
/// the verdict block.
pub fn render_markdown(records: &[RunRecord], verdicts: &[Verdict]) -> String {
    let mut out = String::new();
    out.push_str("| Hidden neurons | Algorithm | Test accuracy | I(X;Z) std-normal | I(X;Z) marginal | Nonsilent | C^S (bits/synapse) |\n");
    out.push_str("|---:|:---|---:|---:|---:|---:|---:|\n");
    let name = |a: Algorithm| match a {
        Algorithm::Bio => "Hebbian + WP",
        Algorithm::Bp => "BP",
        Algorithm::Chorowski => "Chorowski",
    };
    for m in cell_means(records) {
        if m.is_failed() {
            let _ = writeln!(out, "| {} | {} | FAILED | | | | |", m.hidden, name(m.algorithm));
            continue;
        }
        let _ = writeln!(
            out,
            "| {} | {} | {:.2}% | {:.2} bits | {:.2} bits | {:.0} | {} |",
            m.hidden,
            name(m.algorithm),
            100.0 * m.accuracy,
            m.mi_standard,
            m.mi_marginal,
            m.nonsilent,
            fmt_cs(m.c_s)
        );
    }
    let failed = records.iter().filter(|r| r.report.is_err()).count();
    if failed > 0 {
        let _ = writeln!(out, "\n{failed} run(s) failed:\n");
        for r in records.iter().filter(|r| r.report.is_err()) {
            let _ = writeln!(
                out,
                "- {} M={} seed {}: {}",
                r.cell.algorithm,
                r.cell.hidden,
                r.cell.seed,
                r.report.as_ref().err().map(String::as_str).unwrap_or("")
            );
        }
    }
    out.push_str("\n## Verdicts\n\n");
    for v in verdicts {
        let _ = writeln!(
            out,
            "- {} {} ({})",
            if v.pass { "PASS" } else { "FAIL" },
            v.name,
            v.detail
        );
    }
    out
}
