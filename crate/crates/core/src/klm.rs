//! Keystroke-level model (KLM) interaction-cost analysis.
//!
//! Operator sequences are written in a small language:
//!
//! ```text
//! sequence := term ('+' term)*
//! term     := factor+
//! factor   := atom (('x' | '×' | '*') count)?
//! atom     := 'K' | 'P' | 'H' | 'D' | 'M' | 'R1' | 'R2' | '(' sequence ')'
//! ```
//!
//! so `(MPK)x4` is four rounds of mental preparation, pointing and a
//! keystroke. `Rt1`/`Rt2` are accepted as aliases of `R1`/`R2`. Whitespace
//! is ignored.
//!
//! The two built-in workflows describe the sketch-canvas (`drawer`) and the
//! point-geometry (`geo`) ways of setting up, running, iterating and
//! exporting one optimization.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KlmError {
    #[error("syntax error at position {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("unknown workflow `{0}` (expected `drawer` or `geo`)")]
    UnknownWorkflow(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Operator {
    /// Keystroke or button press.
    K,
    /// Pointing: moving the cursor to a target.
    P,
    /// Homing between devices.
    H,
    /// Drawing.
    D,
    /// Mental preparation.
    M,
    /// Host application response.
    R1,
    /// Generation response.
    R2,
}

impl Operator {
    pub const ALL: [Operator; 7] = [
        Operator::K,
        Operator::P,
        Operator::H,
        Operator::D,
        Operator::M,
        Operator::R1,
        Operator::R2,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            Operator::K => "K",
            Operator::P => "P",
            Operator::H => "H",
            Operator::D => "D",
            Operator::M => "M",
            Operator::R1 => "R1",
            Operator::R2 => "R2",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// Execution time per operator, in seconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OperatorTable {
    #[serde(rename = "K")]
    pub k: f64,
    #[serde(rename = "P")]
    pub p: f64,
    #[serde(rename = "H")]
    pub h: f64,
    #[serde(rename = "D")]
    pub d: f64,
    #[serde(rename = "M")]
    pub m: f64,
    #[serde(rename = "R1")]
    pub r1: f64,
    #[serde(rename = "R2")]
    pub r2: f64,
}

impl Default for OperatorTable {
    fn default() -> Self {
        Self {
            k: 0.20,
            p: 1.10,
            h: 0.40,
            d: 6.70,
            m: 1.35,
            r1: 1.00,
            r2: 10.00,
        }
    }
}

impl OperatorTable {
    pub fn time(&self, op: Operator) -> f64 {
        match op {
            Operator::K => self.k,
            Operator::P => self.p,
            Operator::H => self.h,
            Operator::D => self.d,
            Operator::M => self.m,
            Operator::R1 => self.r1,
            Operator::R2 => self.r2,
        }
    }

    /// Operators whose time is not strictly positive.
    pub fn non_positive(&self) -> Vec<Operator> {
        Operator::ALL
            .into_iter()
            .filter(|&op| !(self.time(op) > 0.0))
            .collect()
    }
}

/// Multiset of operators.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct OperatorCounts([u64; 7]);

impl OperatorCounts {
    pub fn single(op: Operator) -> Self {
        let mut c = Self::default();
        c.0[op.index()] = 1;
        c
    }

    pub fn get(&self, op: Operator) -> u64 {
        self.0[op.index()]
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.total() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = (Operator, u64)> + '_ {
        Operator::ALL.into_iter().map(|op| (op, self.get(op)))
    }
}

impl Add for OperatorCounts {
    type Output = Self;

    fn add(mut self, rhs: Self) -> Self {
        for (a, b) in self.0.iter_mut().zip(rhs.0) {
            *a += b;
        }
        self
    }
}

impl Mul<u64> for OperatorCounts {
    type Output = Self;

    fn mul(mut self, n: u64) -> Self {
        for a in &mut self.0 {
            *a *= n;
        }
        self
    }
}

impl fmt::Display for OperatorCounts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .iter()
            .filter(|(_, n)| *n > 0)
            .map(|(op, n)| format!("{op}:{n}"))
            .collect();
        write!(f, "{{{}}}", parts.join(", "))
    }
}

/// Parses an operator sequence into counts.
pub fn parse_sequence(text: &str) -> Result<OperatorCounts, KlmError> {
    let chars: Vec<(usize, char)> = text
        .char_indices()
        .filter(|(_, c)| !c.is_whitespace())
        .collect();
    if chars.is_empty() {
        return Ok(OperatorCounts::default());
    }
    let mut parser = Parser {
        chars: &chars,
        pos: 0,
        len: text.len(),
    };
    let counts = parser.sequence()?;
    if parser.pos < chars.len() {
        return Err(parser.error("unexpected character"));
    }
    Ok(counts)
}

struct Parser<'a> {
    chars: &'a [(usize, char)],
    pos: usize,
    len: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).map(|&(_, c)| c)
    }

    fn offset(&self) -> usize {
        self.chars.get(self.pos).map_or(self.len, |&(i, _)| i)
    }

    fn error(&self, message: &str) -> KlmError {
        let found = self
            .peek()
            .map_or_else(|| "end of input".to_string(), |c| format!("`{c}`"));
        KlmError::Syntax {
            position: self.offset(),
            message: format!("{message}, found {found}"),
        }
    }

    fn sequence(&mut self) -> Result<OperatorCounts, KlmError> {
        let mut counts = self.term()?;
        while self.peek() == Some('+') {
            self.pos += 1;
            counts = counts + self.term()?;
        }
        Ok(counts)
    }

    fn term(&mut self) -> Result<OperatorCounts, KlmError> {
        let mut counts = self.factor()?;
        while matches!(self.peek(), Some(c) if c == '(' || "KPHDMR".contains(c)) {
            counts = counts + self.factor()?;
        }
        Ok(counts)
    }

    fn factor(&mut self) -> Result<OperatorCounts, KlmError> {
        let atom = self.atom()?;
        if matches!(self.peek(), Some('x' | '×' | '*')) {
            self.pos += 1;
            let n = self.count()?;
            return Ok(atom * n);
        }
        Ok(atom)
    }

    fn count(&mut self) -> Result<u64, KlmError> {
        let start = self.pos;
        let mut n: u64 = 0;
        while let Some(d) = self.peek().and_then(|c| c.to_digit(10)) {
            n = n
                .checked_mul(10)
                .and_then(|n| n.checked_add(u64::from(d)))
                .ok_or_else(|| self.error("repetition count overflows"))?;
            self.pos += 1;
        }
        if self.pos == start {
            return Err(self.error("expected a repetition count"));
        }
        Ok(n)
    }

    fn atom(&mut self) -> Result<OperatorCounts, KlmError> {
        let op = match self.peek() {
            Some('(') => {
                self.pos += 1;
                let inner = self.sequence()?;
                if self.peek() != Some(')') {
                    return Err(self.error("expected `)`"));
                }
                self.pos += 1;
                return Ok(inner);
            }
            Some('K') => Operator::K,
            Some('P') => Operator::P,
            Some('H') => Operator::H,
            Some('D') => Operator::D,
            Some('M') => Operator::M,
            Some('R') => {
                self.pos += 1;
                if self.peek() == Some('t') {
                    self.pos += 1;
                }
                return match self.peek() {
                    Some('1') => {
                        self.pos += 1;
                        Ok(OperatorCounts::single(Operator::R1))
                    }
                    Some('2') => {
                        self.pos += 1;
                        Ok(OperatorCounts::single(Operator::R2))
                    }
                    _ => Err(self.error("expected response operator R1 or R2")),
                };
            }
            _ => return Err(self.error("expected an operator or `(`")),
        };
        self.pos += 1;
        Ok(OperatorCounts::single(op))
    }
}

/// Seconds needed for a multiset of operators.
pub fn sequence_time(counts: &OperatorCounts, table: &OperatorTable) -> f64 {
    counts
        .iter()
        .map(|(op, n)| n as f64 * table.time(op))
        .sum()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct KlmStep {
    pub label: &'static str,
    pub title: &'static str,
    pub sequence: &'static str,
}

/// Steps executed once plus steps repeated on every design iteration.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct KlmWorkflow {
    pub name: &'static str,
    pub base_steps: Vec<KlmStep>,
    pub iter_steps: Vec<KlmStep>,
}

const fn step(label: &'static str, title: &'static str, sequence: &'static str) -> KlmStep {
    KlmStep {
        label,
        title,
        sequence,
    }
}

impl KlmWorkflow {
    /// Sketch-canvas workflow.
    pub fn drawer() -> Self {
        Self {
            name: "drawer",
            base_steps: vec![
                step("A", "Open Grasshopper and the plugin", "(MPK)x4"),
                step("B", "Draw the topology optimization region", "MPK + MPK + MP"),
                step("C", "Input geometry into Grasshopper", "(MPK + MPK + MPKKR1)x2"),
                step("D", "Draw the sketch", "(MPK)x12 + MPKD + MPKP"),
                step("E", "Run the program", "MPKR2"),
                step("G", "Export the result", "(MPK)x2"),
            ],
            iter_steps: vec![step(
                "F",
                "Redraw in the nth iteration",
                "(MPK)x3 + MPKD + MPKP + MPKR2",
            )],
        }
    }

    /// Point-geometry workflow.
    pub fn geo() -> Self {
        Self {
            name: "geo",
            base_steps: vec![
                step("A", "Open Grasshopper and the plugin", "(MPK)x4"),
                step("B", "Draw the topology optimization region", "MPK + MPK + MP"),
                step("C", "Draw the constraints", "(MPK)x9"),
                step("D", "Draw the mask", "(MPK)x6"),
                step(
                    "E",
                    "Input geometry into Grasshopper",
                    "MPK + MPK + MPKKKKKR1 + (MPK + MPK + MPKKR1)x5",
                ),
                step("F", "Run the program", "MPKR2"),
                step("H", "Export the result", "(MPK)x2"),
            ],
            iter_steps: vec![step(
                "G",
                "Redraw in the nth iteration",
                "MPKHK + (MPK)x6 + (MPK + MPK + MPKKR1) + MPKR2",
            )],
        }
    }

    pub fn by_name(name: &str) -> Result<Self, KlmError> {
        match name.to_ascii_lowercase().as_str() {
            "drawer" => Ok(Self::drawer()),
            "geo" => Ok(Self::geo()),
            _ => Err(KlmError::UnknownWorkflow(name.to_string())),
        }
    }

    fn sum(steps: &[KlmStep]) -> Result<OperatorCounts, KlmError> {
        steps.iter().try_fold(OperatorCounts::default(), |acc, s| {
            Ok(acc + parse_sequence(s.sequence)?)
        })
    }

    pub fn base_counts(&self) -> Result<OperatorCounts, KlmError> {
        Self::sum(&self.base_steps)
    }

    pub fn iteration_counts(&self) -> Result<OperatorCounts, KlmError> {
        Self::sum(&self.iter_steps)
    }

    /// Operator counts for a session with `n` design iterations.
    pub fn counts(&self, n: u64) -> Result<OperatorCounts, KlmError> {
        Ok(self.base_counts()? + self.iteration_counts()? * n)
    }
}

/// Total time and its split by operator.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WorkflowTime {
    pub total_s: f64,
    pub per_operator: BTreeMap<String, f64>,
}

pub fn workflow_time(
    workflow: &KlmWorkflow,
    n: u64,
    table: &OperatorTable,
) -> Result<WorkflowTime, KlmError> {
    let counts = workflow.counts(n)?;
    let per_operator: BTreeMap<String, f64> = counts
        .iter()
        .map(|(op, c)| (op.symbol().to_string(), c as f64 * table.time(op)))
        .collect();
    Ok(WorkflowTime {
        total_s: sequence_time(&counts, table),
        per_operator,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counts(pairs: &[(Operator, u64)]) -> OperatorCounts {
        pairs
            .iter()
            .fold(OperatorCounts::default(), |acc, &(op, n)| acc + OperatorCounts::single(op) * n)
    }

    /// Independent oracle: count operator letters after textual expansion of
    /// `(...)xN` groups.
    fn brute_force(text: &str) -> OperatorCounts {
        let mut s: String = text.chars().filter(|c| !c.is_whitespace() && *c != '+').collect();
        while let Some(close) = s.find(')') {
            let open = s[..close].rfind('(').unwrap();
            let rest = &s[close + 1..];
            let (times, tail) = match rest.strip_prefix('x') {
                Some(r) => {
                    let digits: String = r.chars().take_while(|c| c.is_ascii_digit()).collect();
                    (digits.parse::<usize>().unwrap(), r[digits.len()..].to_string())
                }
                None => (1, rest.to_string()),
            };
            s = format!("{}{}{}", &s[..open], s[open + 1..close].repeat(times), tail);
        }
        let s = s.replace("R1", "1").replace("R2", "2");
        let mut out = OperatorCounts::default();
        for c in s.chars() {
            let op = match c {
                'K' => Operator::K,
                'P' => Operator::P,
                'H' => Operator::H,
                'D' => Operator::D,
                'M' => Operator::M,
                '1' => Operator::R1,
                '2' => Operator::R2,
                other => panic!("unexpected {other}"),
            };
            out = out + OperatorCounts::single(op);
        }
        out
    }

    #[test]
    fn parse_examples() {
        use Operator::*;
        assert_eq!(parse_sequence("(MPK)x4").unwrap(), counts(&[(M, 4), (P, 4), (K, 4)]));
        assert_eq!(
            parse_sequence("MPKKKKKR1").unwrap(),
            counts(&[(M, 1), (P, 1), (K, 5), (R1, 1)])
        );
        assert!(parse_sequence("").unwrap().is_empty());
        assert_eq!(parse_sequence("MPKRt2").unwrap(), parse_sequence("MPKR2").unwrap());
        assert_eq!(parse_sequence("(MP)×2").unwrap(), counts(&[(M, 2), (P, 2)]));
    }

    #[test]
    fn syntax_errors_carry_position() {
        let err = parse_sequence("MPQ").unwrap_err();
        assert_eq!(
            err,
            KlmError::Syntax {
                position: 2,
                message: "unexpected character, found `Q`".into()
            }
        );
        assert!(matches!(parse_sequence("(MPK"), Err(KlmError::Syntax { position: 4, .. })));
        assert!(matches!(parse_sequence("(MPK)x"), Err(KlmError::Syntax { .. })));
        assert!(matches!(parse_sequence("MPK +"), Err(KlmError::Syntax { .. })));
        assert!(matches!(parse_sequence("R3"), Err(KlmError::Syntax { position: 1, .. })));
    }

    #[test]
    fn every_workflow_step_matches_brute_force() {
        for wf in [KlmWorkflow::drawer(), KlmWorkflow::geo()] {
            for s in wf.base_steps.iter().chain(&wf.iter_steps) {
                assert_eq!(parse_sequence(s.sequence).unwrap(), brute_force(s.sequence), "{}", s.sequence);
            }
        }
    }

    #[test]
    fn sequence_time_examples() {
        use Operator::*;
        let t = OperatorTable::default();
        assert!((sequence_time(&counts(&[(M, 1), (P, 1), (K, 1)]), &t) - 2.65).abs() < 1e-12);
        assert!((sequence_time(&counts(&[(M, 1), (P, 1), (K, 1), (R2, 1)]), &t) - 12.65).abs() < 1e-12);
        assert_eq!(sequence_time(&OperatorCounts::default(), &t), 0.0);
    }

    #[test]
    fn step_times() {
        let t = OperatorTable::default();
        let time = |s: &str| sequence_time(&parse_sequence(s).unwrap(), &t);
        let drawer: Vec<f64> = KlmWorkflow::drawer().base_steps.iter().map(|s| time(s.sequence)).collect();
        for (got, want) in drawer.iter().zip([10.60, 7.75, 18.30, 44.90, 12.65, 5.30]) {
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
        let geo: Vec<f64> = KlmWorkflow::geo().base_steps.iter().map(|s| time(s.sequence)).collect();
        for (got, want) in geo.iter().zip([10.60, 7.75, 23.85, 15.90, 55.50, 12.65, 5.30]) {
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
    }

    #[test]
    fn workflow_totals() {
        let t = OperatorTable::default();
        let drawer = KlmWorkflow::drawer();
        let geo = KlmWorkflow::geo();
        assert!((workflow_time(&drawer, 0, &t).unwrap().total_s - 99.50).abs() < 1e-9);
        assert!((workflow_time(&geo, 0, &t).unwrap().total_s - 131.55).abs() < 1e-9);
        let inc = |w: &KlmWorkflow| {
            workflow_time(w, 1, &t).unwrap().total_s - workflow_time(w, 0, &t).unwrap().total_s
        };
        assert!((inc(&drawer) - 33.70).abs() < 1e-9);
        assert!((inc(&geo) - 40.95).abs() < 1e-9);
    }

    #[test]
    fn breakdown_sums_to_total() {
        let t = OperatorTable::default();
        for n in 0..5 {
            let w = workflow_time(&KlmWorkflow::geo(), n, &t).unwrap();
            let sum: f64 = w.per_operator.values().sum();
            assert!((sum - w.total_s).abs() < 1e-9);
        }
    }

    #[test]
    fn mental_operator_counts() {
        assert_eq!(KlmWorkflow::drawer().counts(1).unwrap().get(Operator::M), 36);
        assert_eq!(KlmWorkflow::geo().counts(1).unwrap().get(Operator::M), 54);
    }

    #[test]
    fn unknown_workflow() {
        assert_eq!(
            KlmWorkflow::by_name("rhino"),
            Err(KlmError::UnknownWorkflow("rhino".into()))
        );
        assert_eq!(KlmWorkflow::by_name("GEO").unwrap().name, "geo");
    }

    #[test]
    fn table_overrides_are_partial() {
        let t: OperatorTable = serde_json::from_str(r#"{"R2": 30.0}"#).unwrap();
        assert_eq!(t.r2, 30.0);
        assert_eq!(t.m, 1.35);
        assert!(t.non_positive().is_empty());
    }

    proptest::proptest! {
        #[test]
        fn linear_in_iterations(n in 0u64..1000) {
            for w in [KlmWorkflow::drawer(), KlmWorkflow::geo()] {
                let c0 = w.counts(0).unwrap();
                let c1 = w.counts(1).unwrap();
                let cn = w.counts(n).unwrap();
                for op in Operator::ALL {
                    proptest::prop_assert_eq!(cn.get(op) - c0.get(op), n * (c1.get(op) - c0.get(op)));
                }
            }
        }

        #[test]
        fn drawer_always_faster(n in 0u64..1000) {
            let t = OperatorTable::default();
            let d = workflow_time(&KlmWorkflow::drawer(), n, &t).unwrap().total_s;
            let g = workflow_time(&KlmWorkflow::geo(), n, &t).unwrap().total_s;
            proptest::prop_assert!(d < g);
        }
    }
}
