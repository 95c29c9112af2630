//! Text renderings of KLM results.

use std::fmt::Write;

use topostudio::klm::{self, parse_sequence, sequence_time, KlmError, KlmWorkflow, OperatorTable};

/// Total session time, two decimals.
pub fn total(workflow: &KlmWorkflow, n: u64, table: &OperatorTable) -> Result<String, KlmError> {
    Ok(format!("{:.2}", klm::workflow_time(workflow, n, table)?.total_s))
}

/// Per-step and per-operator split of one session.
pub fn breakdown(workflow: &KlmWorkflow, n: u64, table: &OperatorTable) -> Result<String, KlmError> {
    let mut out = String::new();
    let _ = writeln!(out, "workflow {} with {n} iteration(s)", workflow.name);
    let _ = writeln!(out, "{:<5} {:>5} {:>9}  {:<38} sequence", "step", "times", "seconds", "title");
    let steps = workflow
        .base_steps
        .iter()
        .map(|s| (s, 1))
        .chain(workflow.iter_steps.iter().map(|s| (s, n)));
    for (step, times) in steps {
        let t = sequence_time(&parse_sequence(step.sequence)?, table) * times as f64;
        let _ = writeln!(
            out,
            "{:<5} {:>5} {:>9.2}  {:<38} {}",
            step.label, times, t, step.title, step.sequence
        );
    }
    let time = klm::workflow_time(workflow, n, table)?;
    let counts = workflow.counts(n)?;
    let _ = writeln!(out);
    let _ = writeln!(out, "{:<8} {:>5} {:>9}", "operator", "count", "seconds");
    for (op, count) in counts.iter() {
        let _ = writeln!(out, "{:<8} {:>5} {:>9.2}", op.symbol(), count, time.per_operator[op.symbol()]);
    }
    let _ = writeln!(out, "{:<8} {:>5} {:>9.2}", "total", counts.total(), time.total_s);
    Ok(out)
}

/// Both workflows side by side for `0..=max_n` iterations.
pub fn comparison(max_n: u64, table: &OperatorTable) -> Result<String, KlmError> {
    let (drawer, geo) = (KlmWorkflow::drawer(), KlmWorkflow::geo());
    let mut out = format!("{:>3} {:>9} {:>9} {:>9}\n", "n", "drawer", "geo", "saved");
    for n in 0..=max_n {
        let d = klm::workflow_time(&drawer, n, table)?.total_s;
        let g = klm::workflow_time(&geo, n, table)?.total_s;
        let _ = writeln!(out, "{n:>3} {d:>9.2} {g:>9.2} {:>9.2}", g - d);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn totals_print_two_decimals() {
        let t = OperatorTable::default();
        assert_eq!(total(&KlmWorkflow::drawer(), 0, &t).unwrap(), "99.50");
        assert_eq!(total(&KlmWorkflow::geo(), 2, &t).unwrap(), "213.45");
    }

    #[test]
    fn breakdown_sums_to_total() {
        let text = breakdown(&KlmWorkflow::geo(), 1, &OperatorTable::default()).unwrap();
        assert!(text.lines().last().unwrap().ends_with("172.50"), "{text}");
        assert!(text.contains("M   "), "{text}");
    }

    #[test]
    fn comparison_rows() {
        let text = comparison(3, &OperatorTable::default()).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(text.contains("  3    200.60    254.40     53.80"), "{text}");
    }
}
