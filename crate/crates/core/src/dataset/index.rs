//! Dataset index: which instance belongs to which class and split.

use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub const ALL: [Split; 2] = [Split::Train, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub class: String,
    pub instance: String,
    pub split: Split,
    pub path: PathBuf,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DatasetIndex {
    entries: Vec<IndexEntry>,
    classes: Vec<String>,
}

impl DatasetIndex {
    /// Builds an index; classes are ordered by first appearance unless
    /// `classes` already lists them. Rejects duplicate (class, instance, split).
    pub fn new(entries: Vec<IndexEntry>, classes: Vec<String>) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert((e.class.as_str(), e.instance.as_str(), e.split)) {
                return Err(Error::Manifest(format!(
                    "duplicate index entry {}/{}/{}",
                    e.class, e.instance, e.split
                )));
            }
        }
        let mut classes = dedup(classes);
        for e in &entries {
            if !classes.contains(&e.class) {
                classes.push(e.class.clone());
            }
        }
        Ok(DatasetIndex { entries, classes })
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn class_index(&self, class: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == class)
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &IndexEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    /// Entry count per class in class-list order.
    pub fn class_counts(&self) -> Vec<(String, usize)> {
        let mut counts = vec![0usize; self.classes.len()];
        for e in &self.entries {
            if let Some(i) = self.class_index(&e.class) {
                counts[i] += 1;
            }
        }
        self.classes.iter().cloned().zip(counts).collect()
    }

    /// Keeps only the listed classes, in the given order.
    pub fn subset(&self, classes: &[String]) -> Result<Self> {
        if let Some(missing) = classes.iter().find(|c| !self.classes.contains(c)) {
            return Err(Error::Config(format!("class `{missing}` not in the index")));
        }
        let entries = self
            .entries
            .iter()
            .filter(|e| classes.contains(&e.class))
            .cloned()
            .collect();
        DatasetIndex::new(entries, classes.to_vec())
    }

    /// Scans `<root>/<class>/<split>/<instance>.off`. Classes are sorted by
    /// name, entries by (class, split, instance).
    pub fn scan(root: &Path) -> Result<Self> {
        let ingest = |path: &Path, e: std::io::Error| Error::Ingestion {
            path: path.to_path_buf(),
            msg: e.to_string(),
        };
        let mut class_dirs: Vec<(String, PathBuf)> = Vec::new();
        for item in std::fs::read_dir(root).map_err(|e| ingest(root, e))? {
            let item = item.map_err(|e| ingest(root, e))?;
            let path = item.path();
            if path.is_dir() {
                class_dirs.push((item.file_name().to_string_lossy().into_owned(), path));
            }
        }
        class_dirs.sort();
        let mut entries = Vec::new();
        for (class, dir) in &class_dirs {
            for split in Split::ALL {
                let sdir = dir.join(split.name());
                if !sdir.is_dir() {
                    continue;
                }
                let mut files = Vec::new();
                for item in std::fs::read_dir(&sdir).map_err(|e| ingest(&sdir, e))? {
                    let path = item.map_err(|e| ingest(&sdir, e))?.path();
                    if path.extension().is_some_and(|x| x.eq_ignore_ascii_case("off")) {
                        files.push(path);
                    }
                }
                files.sort();
                for path in files {
                    let instance = path
                        .file_stem()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_default();
                    entries.push(IndexEntry {
                        class: class.clone(),
                        instance,
                        split,
                        path,
                    });
                }
            }
        }
        let classes = class_dirs.into_iter().map(|(c, _)| c).collect();
        DatasetIndex::new(entries, classes)
    }

    /// Reads a `class,instance,split,path` CSV. Relative paths resolve
    /// against `base`.
    pub fn read_csv(reader: impl Read, base: Option<&Path>) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["class", "instance", "split", "path"] {
            return Err(Error::Manifest(
                "index CSV header must be `class,instance,split,path`".into(),
            ));
        }
        let mut entries = Vec::new();
        for (i, rec) in rdr.deserialize::<IndexEntry>().enumerate() {
            let mut e = rec.map_err(|err| Error::Manifest(format!("index CSV row {}: {err}", i + 2)))?;
            if let Some(b) = base {
                if e.path.is_relative() && !e.path.as_os_str().is_empty() {
                    e.path = b.join(&e.path);
                }
            }
            entries.push(e);
        }
        DatasetIndex::new(entries, Vec::new())
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::Ingestion {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        Self::read_csv(file, path.parent())
    }

    /// A directory is scanned, a file is read as an index CSV.
    pub fn open(root: &Path) -> Result<Self> {
        if root.is_dir() {
            Self::scan(root)
        } else {
            Self::load_csv(root)
        }
    }

    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for e in &self.entries {
            w.serialize(e)?;
        }
        if self.entries.is_empty() {
            w.write_record(["class", "instance", "split", "path"])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Index without files: `counts` gives (class, train, test) and
    /// instances are named `{class}_{i:04}` with i running across both splits.
    pub fn synthetic(counts: &[(&str, usize, usize)]) -> Result<Self> {
        let mut entries = Vec::new();
        for &(class, train, test) in counts {
            for i in 1..=train + test {
                let split = if i <= train { Split::Train } else { Split::Test };
                let instance = format!("{class}_{i:04}");
                let path = PathBuf::from(class).join(split.name()).join(format!("{instance}.off"));
                entries.push(IndexEntry {
                    class: class.to_string(),
                    instance,
                    split,
                    path,
                });
            }
        }
        DatasetIndex::new(entries, counts.iter().map(|c| c.0.to_string()).collect())
    }
}

fn dedup(names: Vec<String>) -> Vec<String> {
    let mut out: Vec<String> = Vec::with_capacity(names.len());
    for n in names {
        if !out.contains(&n) {
            out.push(n);
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetStats {
    pub n_classes: usize,
    pub total: usize,
    pub min: usize,
    pub max: usize,
    pub mean: f64,
    pub min_class: Option<String>,
    pub max_class: Option<String>,
    pub per_class: Vec<(String, usize)>,
}

/// Class count, instance total and per-class extremes; first class wins ties.
pub fn dataset_stats(index: &DatasetIndex) -> DatasetStats {
    let per_class = index.class_counts();
    let total: usize = per_class.iter().map(|c| c.1).sum();
    let mut min: Option<&(String, usize)> = None;
    let mut max: Option<&(String, usize)> = None;
    for c in &per_class {
        if min.is_none_or(|m| c.1 < m.1) {
            min = Some(c);
        }
        if max.is_none_or(|m| c.1 > m.1) {
            max = Some(c);
        }
    }
    DatasetStats {
        n_classes: per_class.len(),
        total,
        min: min.map_or(0, |c| c.1),
        max: max.map_or(0, |c| c.1),
        mean: if per_class.is_empty() {
            0.0
        } else {
            total as f64 / per_class.len() as f64
        },
        min_class: min.map(|c| c.0.clone()),
        max_class: max.map(|c| c.0.clone()),
        per_class,
    }
}

/// ModelNet40 per-class (train, test) instance counts.
pub const MODELNET40: [(&str, usize, usize); 40] = [
    ("airplane", 626, 100),
    ("bathtub", 106, 50),
    ("bed", 515, 100),
    ("bench", 173, 20),
    ("bookshelf", 572, 100),
    ("bottle", 335, 100),
    ("bowl", 64, 20),
    ("car", 197, 100),
    ("chair", 889, 100),
    ("cone", 167, 20),
    ("cup", 79, 20),
    ("curtain", 138, 20),
    ("desk", 200, 86),
    ("door", 109, 20),
    ("dresser", 200, 86),
    ("flower_pot", 149, 20),
    ("glass_box", 171, 100),
    ("guitar", 155, 100),
    ("keyboard", 145, 20),
    ("lamp", 124, 20),
    ("laptop", 149, 20),
    ("mantel", 284, 100),
    ("monitor", 465, 100),
    ("night_stand", 200, 86),
    ("person", 88, 20),
    ("piano", 231, 100),
    ("plant", 240, 100),
    ("radio", 104, 20),
    ("range_hood", 115, 100),
    ("sink", 128, 20),
    ("sofa", 680, 100),
    ("stairs", 124, 20),
    ("stool", 90, 20),
    ("table", 392, 100),
    ("tent", 163, 20),
    ("toilet", 344, 100),
    ("tv_stand", 267, 100),
    ("vase", 475, 100),
    ("wardrobe", 87, 20),
    ("xbox", 103, 20),
];

/// Original counts of the five classes touched by the shipped manifest, split
/// as (train, test).
pub const REFINED_CLASSES_ORIGINAL: [(&str, usize, usize); 5] = [
    ("flower_pot", 149, 20),
    ("plant", 239, 100),
    ("vase", 475, 100),
    ("cup", 79, 20),
    ("bowl", 64, 20),
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modelnet40_reference_stats() {
        let s = dataset_stats(&DatasetIndex::synthetic(&MODELNET40).unwrap());
        assert_eq!(s.n_classes, 40);
        assert_eq!(s.total, 12_311);
        assert_eq!((s.max, s.max_class.as_deref()), (989, Some("chair")));
        assert_eq!((s.min, s.min_class.as_deref()), (84, Some("bowl")));
    }

    #[test]
    fn empty_and_small_stats() {
        let s = dataset_stats(&DatasetIndex::default());
        assert_eq!((s.n_classes, s.total, s.min, s.max, s.mean), (0, 0, 0, 0, 0.0));
        let s = dataset_stats(&DatasetIndex::synthetic(&[("a", 1, 0), ("b", 1, 1), ("c", 2, 1)]).unwrap());
        assert_eq!(s.mean, 2.0);
    }

    #[test]
    fn duplicates_are_rejected() {
        let e = IndexEntry {
            class: "a".into(),
            instance: "x".into(),
            split: Split::Train,
            path: "x.off".into(),
        };
        assert!(DatasetIndex::new(vec![e.clone(), e], vec![]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let idx = DatasetIndex::synthetic(&[("a", 2, 1), ("b", 0, 2)]).unwrap();
        let mut buf = Vec::new();
        idx.write_csv(&mut buf).unwrap();
        let back = DatasetIndex::read_csv(buf.as_slice(), None).unwrap();
        assert_eq!(back, idx);
    }

    #[test]
    fn scan_reads_layout() {
        let dir = tempfile::tempdir().unwrap();
        for (c, s, i) in [("b", "train", "b1"), ("a", "test", "a2"), ("a", "train", "a1")] {
            let d = dir.path().join(c).join(s);
            std::fs::create_dir_all(&d).unwrap();
            std::fs::write(d.join(format!("{i}.off")), "OFF\n0 0 0\n").unwrap();
        }
        std::fs::write(dir.path().join("a/train/readme.txt"), "x").unwrap();
        let idx = DatasetIndex::scan(dir.path()).unwrap();
        assert_eq!(idx.classes(), ["a", "b"]);
        let names: Vec<_> = idx.entries().iter().map(|e| (e.instance.as_str(), e.split)).collect();
        assert_eq!(names, [("a1", Split::Train), ("a2", Split::Test), ("b1", Split::Train)]);
    }
}
