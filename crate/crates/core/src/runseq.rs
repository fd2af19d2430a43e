//! Coupled-component data dependencies and run sequences: parsing,
//! validation against declarations, and generation by topological order.
//!
//! Component file, one declaration per line:
//!
//! ```text
//! ATM exports precip,radiation
//! LND imports precip,radiation lagged soilmoist
//! ```
//!
//! Sequence file: `@<seconds>` header, one entry per line (`COMP` or
//! `SRC -> DST :f1,f2`), closing `@`. `#` starts a comment in both formats.

use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use thiserror::Error;

pub const DEFAULT_INTERVAL: u64 = 3600;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ComponentDecl {
    pub name: String,
    pub exports: BTreeSet<String>,
    /// Field name to lagged flag.
    pub imports: BTreeMap<String, bool>,
}

impl ComponentDecl {
    pub fn new(name: &str) -> Self {
        ComponentDecl {
            name: name.to_string(),
            ..Default::default()
        }
    }

    pub fn exports(mut self, fields: &[&str]) -> Self {
        self.exports.extend(fields.iter().map(|f| f.to_string()));
        self
    }

    pub fn imports(mut self, fields: &[&str]) -> Self {
        self.imports.extend(fields.iter().map(|f| (f.to_string(), false)));
        self
    }

    pub fn lagged(mut self, fields: &[&str]) -> Self {
        self.imports.extend(fields.iter().map(|f| (f.to_string(), true)));
        self
    }

    pub fn unlagged_imports(&self) -> impl Iterator<Item = &str> {
        self.imports.iter().filter(|(_, l)| !**l).map(|(f, _)| f.as_str())
    }
}

impl fmt::Display for ComponentDecl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |it: &mut dyn Iterator<Item = &String>| it.cloned().collect::<Vec<_>>().join(",");
        write!(f, "{}", self.name)?;
        if !self.exports.is_empty() {
            write!(f, " exports {}", join(&mut self.exports.iter()))?;
        }
        let unlagged: Vec<_> = self.imports.iter().filter(|(_, l)| !**l).map(|(n, _)| n).collect();
        if !unlagged.is_empty() {
            write!(f, " imports {}", join(&mut unlagged.into_iter()))?;
        }
        let lagged: Vec<_> = self.imports.iter().filter(|(_, l)| **l).map(|(n, _)| n).collect();
        if !lagged.is_empty() {
            write!(f, " lagged {}", join(&mut lagged.into_iter()))?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Entry {
    Run { component: String },
    Exchange { fields: Vec<String>, from: String, to: String },
}

impl Entry {
    pub fn run(component: &str) -> Self {
        Entry::Run {
            component: component.to_string(),
        }
    }

    pub fn exchange(fields: &[&str], from: &str, to: &str) -> Self {
        Entry::Exchange {
            fields: fields.iter().map(|f| f.to_string()).collect(),
            from: from.to_string(),
            to: to.to_string(),
        }
    }
}

impl fmt::Display for Entry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Entry::Run { component } => write!(f, "{component}"),
            Entry::Exchange { fields, from, to } => write!(f, "{from} -> {to} :{}", fields.join(",")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RunSequence {
    /// Coupling interval in seconds.
    pub interval: u64,
    pub entries: Vec<Entry>,
}

impl fmt::Display for RunSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "@{}", self.interval)?;
        for e in &self.entries {
            writeln!(f, "  {e}")?;
        }
        writeln!(f, "@")
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown component `{name}`")]
    UnknownComponent { line: usize, name: String },
}

fn syntax(line: usize, message: impl Into<String>) -> ParseError {
    ParseError::Syntax {
        line,
        message: message.into(),
    }
}

fn is_name(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn field_list(line: usize, text: &str) -> Result<Vec<String>, ParseError> {
    text.split(',')
        .map(|f| {
            let f = f.trim();
            if is_name(f) {
                Ok(f.to_string())
            } else {
                Err(syntax(line, format!("bad field name `{f}`")))
            }
        })
        .collect()
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(n, l)| (n + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty())
}

pub fn parse_components(text: &str) -> Result<Vec<ComponentDecl>, ParseError> {
    let mut decls: Vec<ComponentDecl> = Vec::new();
    for (line, content) in content_lines(text) {
        let words: Vec<&str> = content.split_whitespace().collect();
        let name = words[0];
        if !is_name(name) {
            return Err(syntax(line, format!("bad component name `{name}`")));
        }
        if decls.iter().any(|d| d.name == name) {
            return Err(syntax(line, format!("component `{name}` declared twice")));
        }
        let mut decl = ComponentDecl::new(name);
        let mut seen = BTreeSet::new();
        let mut rest = &words[1..];
        while let [keyword, list, tail @ ..] = rest {
            if !seen.insert(*keyword) {
                return Err(syntax(line, format!("repeated `{keyword}` clause")));
            }
            let fields = field_list(line, list)?;
            match *keyword {
                "exports" => decl.exports.extend(fields),
                "imports" | "lagged" => {
                    for f in fields {
                        if decl.imports.insert(f.clone(), *keyword == "lagged").is_some() {
                            return Err(syntax(line, format!("field `{f}` imported twice")));
                        }
                    }
                }
                other => return Err(syntax(line, format!("expected exports, imports or lagged, found `{other}`"))),
            }
            rest = tail;
        }
        if let [dangling] = rest {
            return Err(syntax(line, format!("`{dangling}` needs a field list")));
        }
        decls.push(decl);
    }
    Ok(decls)
}

/// Parses a sequence; every component must appear in `decls`.
pub fn parse_run_sequence(text: &str, decls: &[ComponentDecl]) -> Result<RunSequence, ParseError> {
    let known = |line: usize, name: &str| {
        if decls.iter().any(|d| d.name == name) {
            Ok(name.to_string())
        } else if is_name(name) {
            Err(ParseError::UnknownComponent {
                line,
                name: name.to_string(),
            })
        } else {
            Err(syntax(line, format!("bad component name `{name}`")))
        }
    };
    let mut lines = content_lines(text);
    let (first, header) = lines.next().ok_or_else(|| syntax(1, "missing `@<seconds>` header"))?;
    let interval = header
        .strip_prefix('@')
        .and_then(|s| s.trim().parse::<u64>().ok())
        .ok_or_else(|| syntax(first, format!("expected `@<seconds>`, found `{header}`")))?;
    let mut entries = Vec::new();
    let mut closed = false;
    for (line, content) in lines {
        if closed {
            return Err(syntax(line, "text after closing `@`"));
        }
        if content == "@" {
            closed = true;
            continue;
        }
        if let Some((route, fields)) = content.split_once(':') {
            let (from, to) = route
                .split_once("->")
                .ok_or_else(|| syntax(line, "expected `SRC -> DST :fields`"))?;
            entries.push(Entry::Exchange {
                fields: field_list(line, fields)?,
                from: known(line, from.trim())?,
                to: known(line, to.trim())?,
            });
        } else {
            entries.push(Entry::Run {
                component: known(line, content)?,
            });
        }
    }
    if !closed {
        return Err(syntax(text.lines().count().max(1), "missing closing `@`"));
    }
    Ok(RunSequence { interval, entries })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationReason {
    ConsumedBeforeProduced,
    ConsumedBeforeExchanged,
    UnknownField,
    DuplicateProducer,
    UnknownComponent,
}

impl fmt::Display for ViolationReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ViolationReason::ConsumedBeforeProduced => "consumed-before-produced",
            ViolationReason::ConsumedBeforeExchanged => "consumed-before-exchanged",
            ViolationReason::UnknownField => "unknown-field",
            ViolationReason::DuplicateProducer => "duplicate-producer",
            ViolationReason::UnknownComponent => "unknown-component",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Violation {
    /// `None` for declaration-level problems.
    pub entry: Option<usize>,
    pub field: String,
    pub reason: ViolationReason,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.entry {
            Some(e) => write!(f, "entry {e}: {} `{}`", self.reason, self.field),
            None => write!(f, "declarations: {} `{}`", self.reason, self.field),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub violations: Vec<Violation>,
}

/// Field name to exporting component, plus fields exported more than once.
fn producers(decls: &[ComponentDecl]) -> (BTreeMap<&str, &str>, BTreeSet<&str>) {
    let mut map = BTreeMap::new();
    let mut duplicates = BTreeSet::new();
    for d in decls {
        for f in &d.exports {
            if map.insert(f.as_str(), d.name.as_str()).is_some() {
                duplicates.insert(f.as_str());
            }
        }
    }
    (map, duplicates)
}

/// Checks one coupling interval. Unlagged imports must be produced by their
/// exporter's run and then delivered by an exchange before the consumer
/// runs; lagged imports come from the previous interval. Components absent
/// from the sequence are checked as if they ran at the end, with violations
/// at entry index `entries.len()`.
pub fn validate_sequence(seq: &RunSequence, decls: &[ComponentDecl]) -> ValidationReport {
    let (producer, duplicates) = producers(decls);
    let decl = |name: &str| decls.iter().find(|d| d.name == name);
    let mut violations: Vec<Violation> = duplicates
        .iter()
        .map(|f| Violation {
            entry: None,
            field: f.to_string(),
            reason: ViolationReason::DuplicateProducer,
        })
        .collect();
    let mut produced: BTreeSet<&str> = BTreeSet::new();
    let mut delivered: BTreeSet<(&str, &str)> = BTreeSet::new();
    for (index, entry) in seq.entries.iter().enumerate() {
        let mut report = |field: &str, reason| {
            violations.push(Violation {
                entry: Some(index),
                field: field.to_string(),
                reason,
            })
        };
        match entry {
            Entry::Run { component } => {
                let Some(d) = decl(component) else {
                    report(component, ViolationReason::UnknownComponent);
                    continue;
                };
                for f in d.unlagged_imports() {
                    if !producer.contains_key(f) {
                        report(f, ViolationReason::UnknownField);
                    } else if !produced.contains(f) {
                        report(f, ViolationReason::ConsumedBeforeProduced);
                    } else if !delivered.contains(&(f, component.as_str())) {
                        report(f, ViolationReason::ConsumedBeforeExchanged);
                    }
                }
                produced.extend(d.exports.iter().map(String::as_str));
            }
            Entry::Exchange { fields, from, to } => {
                for name in [from, to] {
                    if decl(name).is_none() {
                        report(name, ViolationReason::UnknownComponent);
                    }
                }
                let importer = decl(to);
                for f in fields {
                    let routed = producer.get(f.as_str()) == Some(&from.as_str())
                        && importer.is_some_and(|d| d.imports.contains_key(f));
                    if !routed {
                        report(f, ViolationReason::UnknownField);
                    } else if produced.contains(f.as_str()) {
                        delivered.insert((f.as_str(), to.as_str()));
                    }
                }
            }
        }
    }
    // A component that never runs consumes its inputs at the interval's end.
    let end = seq.entries.len();
    for d in decls {
        let ran = seq.entries.iter().any(|e| matches!(e, Entry::Run { component } if *component == d.name));
        if ran {
            continue;
        }
        for f in d.unlagged_imports() {
            let reason = if !producer.contains_key(f) {
                ViolationReason::UnknownField
            } else if !produced.contains(f) {
                ViolationReason::ConsumedBeforeProduced
            } else if !delivered.contains(&(f, d.name.as_str())) {
                ViolationReason::ConsumedBeforeExchanged
            } else {
                continue;
            };
            violations.push(Violation {
                entry: Some(end),
                field: f.to_string(),
                reason,
            });
        }
    }
    ValidationReport {
        ok: violations.is_empty(),
        violations,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CycleReport {
    /// Components on a shortest unlagged-dependency cycle, starting from the
    /// lexicographically least; each depends on the previous one.
    pub cycle: Vec<String>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GenerateError {
    #[error("unlagged dependency cycle: {}", .0.cycle.join(" -> "))]
    Cycle(CycleReport),
    #[error("field `{0}` is exported by more than one component")]
    DuplicateProducer(String),
    #[error("component `{component}` imports `{field}`, which nothing exports")]
    UnknownField { component: String, field: String },
}

/// Unlagged dependency edges: producer index to sorted consumer indices.
fn dependency_graph(decls: &[ComponentDecl]) -> Result<Vec<BTreeSet<usize>>, GenerateError> {
    let (producer, duplicates) = producers(decls);
    if let Some(f) = duplicates.first() {
        return Err(GenerateError::DuplicateProducer(f.to_string()));
    }
    let index: BTreeMap<&str, usize> = decls.iter().enumerate().map(|(i, d)| (d.name.as_str(), i)).collect();
    let mut edges = vec![BTreeSet::new(); decls.len()];
    for (c, d) in decls.iter().enumerate() {
        for (f, lagged) in &d.imports {
            let Some(p) = producer.get(f.as_str()) else {
                return Err(GenerateError::UnknownField {
                    component: d.name.clone(),
                    field: f.clone(),
                });
            };
            if !lagged {
                edges[index[p]].insert(c);
            }
        }
    }
    Ok(edges)
}

/// Shortest cycle among `nodes`, rotated to start at its least name.
fn shortest_cycle(decls: &[ComponentDecl], edges: &[BTreeSet<usize>], nodes: &BTreeSet<usize>) -> Vec<String> {
    let mut best: Option<Vec<usize>> = None;
    for &start in nodes {
        // BFS from start back to start inside the stuck subgraph.
        let mut parent: BTreeMap<usize, usize> = BTreeMap::new();
        let mut queue = VecDeque::from([start]);
        let mut found = None;
        'bfs: while let Some(u) = queue.pop_front() {
            for &v in &edges[u] {
                if !nodes.contains(&v) {
                    continue;
                }
                if v == start {
                    found = Some(u);
                    break 'bfs;
                }
                if let std::collections::btree_map::Entry::Vacant(e) = parent.entry(v) {
                    e.insert(u);
                    queue.push_back(v);
                }
            }
        }
        let Some(mut u) = found else { continue };
        let mut path = vec![u];
        while u != start {
            u = parent[&u];
            path.push(u);
        }
        path.reverse();
        let better = match &best {
            None => true,
            Some(b) => path.len() < b.len(),
        };
        if better {
            best = Some(path);
        }
    }
    let mut cycle = best.unwrap_or_default();
    if let Some(pos) = (0..cycle.len()).min_by_key(|&k| &decls[cycle[k]].name) {
        cycle.rotate_left(pos);
    }
    cycle.into_iter().map(|c| decls[c].name.clone()).collect()
}

/// Kahn's algorithm with lexicographic tie-break; after each run, one
/// exchange per consumer carries every field it imports from that run.
pub fn generate_sequence(decls: &[ComponentDecl]) -> Result<RunSequence, GenerateError> {
    let edges = dependency_graph(decls)?;
    let mut indegree = vec![0usize; decls.len()];
    for targets in &edges {
        for &t in targets {
            indegree[t] += 1;
        }
    }
    let mut ready: BTreeSet<(&str, usize)> = (0..decls.len())
        .filter(|&c| indegree[c] == 0)
        .map(|c| (decls[c].name.as_str(), c))
        .collect();
    let mut entries = Vec::new();
    let mut done = BTreeSet::new();
    while let Some((name, c)) = ready.pop_first() {
        done.insert(c);
        entries.push(Entry::run(name));
        let mut consumers: Vec<&ComponentDecl> = decls.iter().collect();
        consumers.sort_by(|a, b| a.name.cmp(&b.name));
        for consumer in consumers {
            let fields: Vec<String> = consumer
                .imports
                .keys()
                .filter(|f| decls[c].exports.contains(*f))
                .cloned()
                .collect();
            if !fields.is_empty() {
                entries.push(Entry::Exchange {
                    fields,
                    from: name.to_string(),
                    to: consumer.name.clone(),
                });
            }
        }
        for &t in &edges[c] {
            indegree[t] -= 1;
            if indegree[t] == 0 {
                ready.insert((decls[t].name.as_str(), t));
            }
        }
    }
    if done.len() < decls.len() {
        let stuck: BTreeSet<usize> = (0..decls.len()).filter(|c| !done.contains(c)).collect();
        return Err(GenerateError::Cycle(CycleReport {
            cycle: shortest_cycle(decls, &edges, &stuck),
        }));
    }
    Ok(RunSequence {
        interval: DEFAULT_INTERVAL,
        entries,
    })
}

pub fn format_components(decls: &[ComponentDecl]) -> String {
    decls.iter().map(|d| format!("{d}\n")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn atm_lnd() -> Vec<ComponentDecl> {
        vec![
            ComponentDecl::new("ATM").exports(&["precip", "radiation"]),
            ComponentDecl::new("LND").imports(&["precip", "radiation"]),
        ]
    }

    #[test]
    fn parses_the_documented_sequence() {
        let seq = parse_run_sequence("@3600\n ATM\n ATM -> LND :precip,radiation\n LND\n@", &atm_lnd()).unwrap();
        assert_eq!(seq.interval, 3600);
        assert_eq!(
            seq.entries,
            [
                Entry::run("ATM"),
                Entry::exchange(&["precip", "radiation"], "ATM", "LND"),
                Entry::run("LND")
            ]
        );
        assert!(validate_sequence(&seq, &atm_lnd()).ok);
        assert_eq!(parse_run_sequence(&seq.to_string(), &atm_lnd()).unwrap(), seq);
    }

    #[test]
    fn run_before_producer_is_reported() {
        let seq = parse_run_sequence("@3600\nLND\nATM\nATM -> LND :precip,radiation\n@", &atm_lnd()).unwrap();
        let r = validate_sequence(&seq, &atm_lnd());
        assert!(!r.ok);
        assert_eq!(r.violations[0].entry, Some(0));
        assert_eq!(r.violations[0].reason, ViolationReason::ConsumedBeforeProduced);
    }

    #[test]
    fn missing_exchange_is_reported() {
        let seq = RunSequence {
            interval: 60,
            entries: vec![Entry::run("ATM"), Entry::run("LND")],
        };
        let r = validate_sequence(&seq, &atm_lnd());
        assert_eq!(r.violations.len(), 2);
        assert!(r.violations.iter().all(|v| v.reason == ViolationReason::ConsumedBeforeExchanged));
    }

    #[test]
    fn exchange_before_production_delivers_nothing() {
        let seq = RunSequence {
            interval: 60,
            entries: vec![
                Entry::exchange(&["precip", "radiation"], "ATM", "LND"),
                Entry::run("ATM"),
                Entry::run("LND"),
            ],
        };
        let r = validate_sequence(&seq, &atm_lnd());
        assert_eq!(r.violations[0].reason, ViolationReason::ConsumedBeforeExchanged);
    }

    #[test]
    fn empty_sequence() {
        let seq = parse_run_sequence("@3600\n@", &atm_lnd()).unwrap();
        assert!(seq.entries.is_empty());
        assert!(!validate_sequence(&seq, &atm_lnd()).ok);
        let lagged = vec![ComponentDecl::new("A").exports(&["x"]), ComponentDecl::new("B").lagged(&["x"])];
        assert!(validate_sequence(&seq, &lagged).ok);
    }

    #[test]
    fn parse_errors() {
        assert_eq!(
            parse_run_sequence("@3600\nATM\nOCN\n@", &atm_lnd()),
            Err(ParseError::UnknownComponent {
                line: 3,
                name: "OCN".into()
            })
        );
        assert!(matches!(parse_run_sequence("ATM\n@", &atm_lnd()), Err(ParseError::Syntax { line: 1, .. })));
        assert!(matches!(parse_run_sequence("@60\nATM\n", &atm_lnd()), Err(ParseError::Syntax { .. })));
        assert!(matches!(parse_components("A exports"), Err(ParseError::Syntax { line: 1, .. })));
        assert!(matches!(parse_components("A\nA"), Err(ParseError::Syntax { line: 2, .. })));
        assert!(matches!(parse_components("A sends x"), Err(ParseError::Syntax { .. })));
    }

    #[test]
    fn component_round_trip() {
        let text = "ATM exports pressure,windstress imports sst lagged runoff\nOCN exports sst imports pressure,windstress\n";
        let decls = parse_components(text).unwrap();
        assert_eq!(decls[0].imports.get("runoff"), Some(&true));
        assert_eq!(parse_components(&format_components(&decls)).unwrap(), decls);
    }

    #[test]
    fn generation_examples() {
        let single = generate_sequence(&[ComponentDecl::new("ATM")]).unwrap();
        assert_eq!(single.entries, [Entry::run("ATM")]);
        let cycle = vec![
            ComponentDecl::new("B").exports(&["x"]).imports(&["y"]),
            ComponentDecl::new("A").exports(&["y"]).imports(&["x"]),
        ];
        assert_eq!(
            generate_sequence(&cycle),
            Err(GenerateError::Cycle(CycleReport {
                cycle: vec!["A".into(), "B".into()]
            }))
        );
    }

    #[test]
    fn lags_break_cycles() {
        let decls = vec![
            ComponentDecl::new("A").exports(&["y"]).lagged(&["x"]),
            ComponentDecl::new("B").exports(&["x"]).lagged(&["y"]),
        ];
        let seq = RunSequence {
            interval: 3600,
            entries: vec![
                Entry::run("A"),
                Entry::exchange(&["y"], "A", "B"),
                Entry::run("B"),
                Entry::exchange(&["x"], "B", "A"),
            ],
        };
        assert!(validate_sequence(&seq, &decls).ok);
        assert_eq!(generate_sequence(&decls).unwrap(), seq);
    }

    #[test]
    fn shortest_cycle_is_reported() {
        // A <-> B and a longer loop A -> C -> D -> A.
        let decls = vec![
            ComponentDecl::new("A").exports(&["a"]).imports(&["b", "d"]),
            ComponentDecl::new("B").exports(&["b"]).imports(&["a"]),
            ComponentDecl::new("C").exports(&["c"]).imports(&["a"]),
            ComponentDecl::new("D").exports(&["d"]).imports(&["c"]),
        ];
        let Err(GenerateError::Cycle(r)) = generate_sequence(&decls) else { panic!() };
        assert_eq!(r.cycle, ["A", "B"]);
    }

    #[test]
    fn self_import_is_a_cycle() {
        let decls = vec![ComponentDecl::new("A").exports(&["a"]).imports(&["a"])];
        let Err(GenerateError::Cycle(r)) = generate_sequence(&decls) else { panic!() };
        assert_eq!(r.cycle, ["A"]);
    }
}
