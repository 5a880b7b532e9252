//! Manifest-driven relabeling and removal with an audit trail.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Write;

use crate::error::{Error, Result};

use super::index::DatasetIndex;

/// The manifest that turns ModelNet40 into the refined variant. Instance ids
/// follow `{class}_{i:04}`; only aggregate counts per class are meaningful.
pub const SHIPPED_MANIFEST: &str = include_str!("../../data/modelnet_r_manifest.csv");

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Action {
    Move(String),
    Remove,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestRecord {
    pub class: String,
    pub instance: String,
    pub action: Action,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RefinementManifest {
    records: Vec<ManifestRecord>,
}

impl RefinementManifest {
    pub fn new(records: Vec<ManifestRecord>) -> Result<Self> {
        let mut seen = HashSet::new();
        for r in &records {
            if !seen.insert(r.instance.as_str()) {
                return Err(Error::Manifest(format!("instance `{}` listed twice", r.instance)));
            }
            if let Action::Move(t) = &r.action {
                if t == &r.class {
                    return Err(Error::Manifest(format!(
                        "instance `{}` moved to its own class `{t}`",
                        r.instance
                    )));
                }
            }
        }
        Ok(RefinementManifest { records })
    }

    pub fn records(&self) -> &[ManifestRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn shipped() -> Self {
        Self::parse(SHIPPED_MANIFEST).expect("shipped manifest is valid")
    }

    /// Parses `class,instance,action,target` CSV.
    pub fn parse(text: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = rdr
            .headers()
            .map_err(|e| Error::Manifest(format!("unreadable header: {e}")))?;
        if headers.iter().collect::<Vec<_>>() != ["class", "instance", "action", "target"] {
            return Err(Error::Manifest(
                "manifest header must be `class,instance,action,target`".into(),
            ));
        }
        let mut records = Vec::new();
        for row in rdr.records() {
            let row = row.map_err(|e| Error::Manifest(e.to_string()))?;
            let line = row.position().map_or(0, |p| p.line());
            let field = |i: usize| row.get(i).unwrap_or("");
            let (class, instance, action, target) = (field(0), field(1), field(2), field(3));
            if class.is_empty() || instance.is_empty() {
                return Err(Error::Manifest(format!("line {line}: empty class or instance")));
            }
            let action = match (action, target) {
                ("move", "") => {
                    return Err(Error::Manifest(format!(
                        "line {line}: move of `{instance}` has no target"
                    )));
                }
                ("move", t) => Action::Move(t.to_string()),
                ("remove", "") => Action::Remove,
                ("remove", _) => {
                    return Err(Error::Manifest(format!(
                        "line {line}: remove of `{instance}` has a target"
                    )));
                }
                (other, _) => {
                    return Err(Error::Manifest(format!("line {line}: unknown action `{other}`")));
                }
            };
            records.push(ManifestRecord {
                class: class.to_string(),
                instance: instance.to_string(),
                action,
            });
        }
        Self::new(records)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Manifest(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["class", "instance", "action", "target"])?;
        for r in &self.records {
            let (a, t) = match &r.action {
                Action::Move(t) => ("move", t.as_str()),
                Action::Remove => ("remove", ""),
            };
            w.write_record([r.class.as_str(), r.instance.as_str(), a, t])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Per-class accounting of a refinement.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AuditReport {
    /// Table columns: manifest source classes in order of first appearance,
    /// then move targets not already listed.
    pub columns: Vec<String>,
    /// Rows, one per manifest source class.
    pub rows: Vec<AuditRow>,
    /// Class sizes of the refined index, in its class order.
    pub final_counts: Vec<(String, usize)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AuditRow {
    pub class: String,
    /// Entries ending up in each column class; the row's own column holds
    /// the entries that stayed.
    pub destinations: Vec<usize>,
    pub removed: usize,
    pub original: usize,
}

impl AuditRow {
    pub fn stayed(&self, columns: &[String]) -> usize {
        columns
            .iter()
            .position(|c| c == &self.class)
            .map_or(0, |i| self.destinations[i])
    }

    pub fn moved_out(&self, columns: &[String]) -> usize {
        self.destinations.iter().sum::<usize>() - self.stayed(columns)
    }
}

impl AuditReport {
    /// Column sums, then removed, then original.
    pub fn totals(&self) -> (Vec<usize>, usize, usize) {
        let mut cols = vec![0; self.columns.len()];
        let (mut removed, mut original) = (0, 0);
        for r in &self.rows {
            for (c, d) in cols.iter_mut().zip(&r.destinations) {
                *c += d;
            }
            removed += r.removed;
            original += r.original;
        }
        (cols, removed, original)
    }

    /// Every row accounts for all of its original entries, and the entries
    /// moved into each class equal those moved out of the others.
    pub fn check_conservation(&self) -> Result<()> {
        for r in &self.rows {
            let accounted = r.destinations.iter().sum::<usize>() + r.removed;
            if accounted != r.original {
                return Err(Error::State(format!(
                    "class `{}`: {accounted} accounted for, {} original",
                    r.class, r.original
                )));
            }
        }
        let moved_out: usize = self.rows.iter().map(|r| r.moved_out(&self.columns)).sum();
        let (cols, _, _) = self.totals();
        let stayed: usize = self.rows.iter().map(|r| r.stayed(&self.columns)).sum();
        let moved_in = cols.iter().sum::<usize>() - stayed;
        if moved_in != moved_out {
            return Err(Error::State(format!("{moved_in} moved in but {moved_out} moved out")));
        }
        Ok(())
    }

    /// The modification table: one row per source class and a `total` row.
    pub fn write_table_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["class".to_string()];
        header.extend(self.columns.iter().cloned());
        header.extend(["removed".to_string(), "original".to_string()]);
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.class.clone()];
            rec.extend(r.destinations.iter().map(usize::to_string));
            rec.extend([r.removed.to_string(), r.original.to_string()]);
            w.write_record(&rec)?;
        }
        let (cols, removed, original) = self.totals();
        let mut rec = vec!["total".to_string()];
        rec.extend(cols.iter().map(usize::to_string));
        rec.extend([removed.to_string(), original.to_string()]);
        w.write_record(&rec)?;
        w.flush()?;
        Ok(())
    }

    pub fn write_final_counts_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["class", "count"])?;
        for (c, n) in &self.final_counts {
            w.write_record([c.as_str(), &n.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Fixed-width rendering of the table for terminals.
    pub fn render(&self) -> String {
        let mut header = vec!["class".to_string()];
        header.extend(self.columns.iter().cloned());
        header.extend(["removed".to_string(), "original".to_string()]);
        let mut lines = vec![header];
        for r in &self.rows {
            let mut l = vec![r.class.clone()];
            l.extend(r.destinations.iter().map(usize::to_string));
            l.extend([r.removed.to_string(), r.original.to_string()]);
            lines.push(l);
        }
        let (cols, removed, original) = self.totals();
        let mut l = vec!["total".to_string()];
        l.extend(cols.iter().map(usize::to_string));
        l.extend([removed.to_string(), original.to_string()]);
        lines.push(l);
        let widths: Vec<usize> = (0..lines[0].len())
            .map(|i| lines.iter().map(|l| l[i].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for l in &lines {
            let cells: Vec<String> = l
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
        }
        out
    }
}

/// Applies moves and removals. Every manifest record must match at least one
/// index entry by (class, instance); all matching entries (any split) follow it.
pub fn apply_manifest(index: &DatasetIndex, manifest: &RefinementManifest) -> Result<(DatasetIndex, AuditReport)> {
    let mut by_key: HashMap<(&str, &str), &ManifestRecord> = HashMap::new();
    for r in manifest.records() {
        by_key.insert((r.class.as_str(), r.instance.as_str()), r);
    }
    let mut matched: HashSet<(&str, &str)> = HashSet::new();
    for e in index.entries() {
        let key = (e.class.as_str(), e.instance.as_str());
        if by_key.contains_key(&key) {
            matched.insert(key);
        }
    }
    if let Some(r) = manifest
        .records()
        .iter()
        .find(|r| !matched.contains(&(r.class.as_str(), r.instance.as_str())))
    {
        return Err(Error::Manifest(format!(
            "manifest instance `{}` of class `{}` is not in the index",
            r.instance, r.class
        )));
    }

    let mut columns: Vec<String> = Vec::new();
    for r in manifest.records() {
        if !columns.contains(&r.class) {
            columns.push(r.class.clone());
        }
    }
    let n_sources = columns.len();
    for r in manifest.records() {
        if let Action::Move(t) = &r.action {
            if !columns.contains(t) {
                columns.push(t.clone());
            }
        }
    }
    let col = |c: &str| columns.iter().position(|x| x == c);

    let mut rows: Vec<AuditRow> = columns[..n_sources]
        .iter()
        .map(|c| AuditRow {
            class: c.clone(),
            destinations: vec![0; columns.len()],
            removed: 0,
            original: 0,
        })
        .collect();

    let mut entries = Vec::with_capacity(index.len());
    for e in index.entries() {
        let record = by_key.get(&(e.class.as_str(), e.instance.as_str()));
        let row = col(&e.class).filter(|&i| i < n_sources);
        if let Some(i) = row {
            rows[i].original += 1;
        }
        match record.map(|r| &r.action) {
            Some(Action::Remove) => {
                if let Some(i) = row {
                    rows[i].removed += 1;
                }
            }
            Some(Action::Move(target)) => {
                if let (Some(i), Some(j)) = (row, col(target)) {
                    rows[i].destinations[j] += 1;
                }
                let mut moved = e.clone();
                moved.class = target.clone();
                entries.push(moved);
            }
            None => {
                if let Some(i) = row {
                    rows[i].destinations[i] += 1;
                }
                entries.push(e.clone());
            }
        }
    }

    let refined = DatasetIndex::new(entries, index.classes().to_vec())?;
    let final_counts = refined.class_counts();
    let report = AuditReport {
        columns,
        rows,
        final_counts,
    };
    report.check_conservation()?;
    Ok((refined, report))
}

/// Per-source-class aggregate of a manifest, for quick inspection.
pub fn manifest_summary(manifest: &RefinementManifest) -> BTreeMap<(String, String), usize> {
    let mut out = BTreeMap::new();
    for r in manifest.records() {
        let dest = match &r.action {
            Action::Move(t) => t.clone(),
            Action::Remove => "removed".to_string(),
        };
        *out.entry((r.class.clone(), dest)).or_insert(0) += 1;
    }
    out
}
