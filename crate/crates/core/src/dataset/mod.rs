//! Dataset manifests, buggy-method labels and instance building.

mod embed;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::codeast::{parse_ast_document, AstNode};
use crate::{Error, Result};

pub use embed::{
    build_instances, AstMethodEmbedder, MethodEmbedder, PrecomputedReports, ReportEmbedder, VectorTable, WordVecReports,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BugRecord {
    pub bug_id: String,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub description: String,
    #[serde(rename = "report_time_epoch")]
    pub report_time: i64,
    /// Commits in the fix; more than one triggers an exclusion warning.
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub fix_commits: u32,
}

fn one() -> u32 {
    1
}

fn is_one(v: &u32) -> bool {
    *v == 1
}

impl BugRecord {
    /// Title and description as one text.
    pub fn report_text(&self) -> String {
        format!("{}\n{}", self.title, self.description)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodRecord {
    pub method_id: String,
    pub file: String,
    pub name: String,
    pub start_line: u32,
    pub end_line: u32,
    pub ast_ref: String,
    /// When absent, a method named `<init>` or after its file's stem is
    /// taken to be a constructor.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub is_constructor: Option<bool>,
}

impl MethodRecord {
    pub fn constructor(&self) -> bool {
        self.is_constructor.unwrap_or_else(|| {
            let stem = Path::new(&self.file).file_stem().and_then(|s| s.to_str()).unwrap_or("");
            self.name == "<init>" || self.name == stem
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffHunk {
    pub file: String,
    /// 1-based lines of the buggy version touched by the fix.
    pub changed_lines: BTreeSet<u32>,
    /// The fix only inserts code.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub add_only: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub bugs: Vec<BugRecord>,
    #[serde(rename = "methods", default)]
    pub methods_per_bug: BTreeMap<String, Vec<MethodRecord>>,
    #[serde(rename = "hunks", default)]
    pub hunks_per_bug: BTreeMap<String, Vec<DiffHunk>>,
    /// Relative to the manifest file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ast_document: Option<PathBuf>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl DatasetManifest {
    pub fn from_json(text: &str, source: &str) -> Result<Self> {
        let manifest: Self = serde_json::from_str(text).map_err(|e| Error::parse(source, e))?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids = HashSet::new();
        for bug in &self.bugs {
            if !ids.insert(bug.bug_id.as_str()) {
                return Err(Error::DuplicateId {
                    kind: "bug",
                    id: bug.bug_id.clone(),
                });
            }
        }
        for (bug, methods) in &self.methods_per_bug {
            if !ids.contains(bug.as_str()) {
                return Err(Error::DanglingReference(format!(
                    "methods listed for unknown bug `{bug}`"
                )));
            }
            let mut seen = HashSet::new();
            for m in methods {
                if !seen.insert(m.method_id.as_str()) {
                    return Err(Error::DuplicateId {
                        kind: "method",
                        id: format!("{bug}/{}", m.method_id),
                    });
                }
                if m.start_line == 0 || m.start_line > m.end_line {
                    return Err(Error::InvariantViolation {
                        path: format!("methods.{bug}.{}", m.method_id),
                        message: format!("bad line range [{}, {}]", m.start_line, m.end_line),
                    });
                }
            }
        }
        for (bug, hunks) in &self.hunks_per_bug {
            if !ids.contains(bug.as_str()) {
                return Err(Error::DanglingReference(format!(
                    "hunks listed for unknown bug `{bug}`"
                )));
            }
            for (i, h) in hunks.iter().enumerate() {
                if h.changed_lines.is_empty() || h.changed_lines.contains(&0) {
                    return Err(Error::InvariantViolation {
                        path: format!("hunks.{bug}[{i}]"),
                        message: "changed_lines must be a nonempty set of positive lines".into(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn methods(&self, bug_id: &str) -> &[MethodRecord] {
        self.methods_per_bug.get(bug_id).map_or(&[], Vec::as_slice)
    }

    pub fn hunks(&self, bug_id: &str) -> &[DiffHunk] {
        self.hunks_per_bug.get(bug_id).map_or(&[], Vec::as_slice)
    }

    pub fn ast_path(&self) -> Option<PathBuf> {
        self.ast_document.as_ref().map(|p| self.base_dir.join(p))
    }

    /// Every `ast_ref` must name a method in the AST document.
    pub fn cross_check(&self, asts: &BTreeMap<String, AstNode>) -> Result<()> {
        for (bug, methods) in &self.methods_per_bug {
            for m in methods {
                if !asts.contains_key(&m.ast_ref) {
                    return Err(Error::DanglingReference(format!(
                        "{bug}/{} refers to AST `{}`, which the AST document lacks",
                        m.method_id, m.ast_ref
                    )));
                }
            }
        }
        Ok(())
    }

    /// Loads the manifest's AST document and cross-checks it.
    pub fn load_asts(&self) -> Result<BTreeMap<String, AstNode>> {
        let path = self
            .ast_path()
            .ok_or_else(|| Error::Config("manifest names no ast_document".into()))?;
        let asts = parse_ast_document(&path)?;
        self.cross_check(&asts)?;
        Ok(asts)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut manifest = DatasetManifest::from_json(&text, &path.display().to_string())?;
    manifest.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(manifest)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Labeling {
    pub buggy: BTreeSet<String>,
    /// `(file, line)` pairs inside no method.
    pub orphan_lines: BTreeSet<(String, u32)>,
}

/// A method is buggy iff a changed line of the same file lies within its
/// inclusive line range.
pub fn label_buggy_methods(methods: &[MethodRecord], hunks: &[DiffHunk]) -> Labeling {
    let mut out = Labeling::default();
    for hunk in hunks {
        for &line in &hunk.changed_lines {
            let mut inside = false;
            for m in methods {
                if m.file == hunk.file && m.start_line <= line && line <= m.end_line {
                    out.buggy.insert(m.method_id.clone());
                    inside = true;
                }
            }
            if !inside {
                out.orphan_lines.insert((hunk.file.clone(), line));
            }
        }
    }
    out
}

/// Conditions under which the original study dropped a bug by hand.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetWarning {
    /// Changed lines outside every method.
    OutsideMethods {
        bug_id: String,
        lines: Vec<(String, u32)>,
    },
    NoBuggyMethods {
        bug_id: String,
    },
    ConstructorOnly {
        bug_id: String,
    },
    MultiCommitFix {
        bug_id: String,
        commits: u32,
    },
    AddOnlyFix {
        bug_id: String,
    },
}

impl DatasetWarning {
    pub fn bug_id(&self) -> &str {
        match self {
            Self::OutsideMethods { bug_id, .. }
            | Self::NoBuggyMethods { bug_id }
            | Self::ConstructorOnly { bug_id }
            | Self::MultiCommitFix { bug_id, .. }
            | Self::AddOnlyFix { bug_id } => bug_id,
        }
    }

    /// Whether strict mode drops the bug. Orphan lines alone do not.
    pub fn excludes(&self) -> bool {
        !matches!(self, Self::OutsideMethods { .. })
    }
}

impl fmt::Display for DatasetWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::OutsideMethods { bug_id, lines } => {
                let shown: Vec<String> = lines.iter().map(|(file, l)| format!("{file}:{l}")).collect();
                write!(f, "{bug_id}: changed lines outside methods: {}", shown.join(", "))
            }
            Self::NoBuggyMethods { bug_id } => write!(f, "{bug_id}: no buggy methods"),
            Self::ConstructorOnly { bug_id } => write!(f, "{bug_id}: only constructors are buggy"),
            Self::MultiCommitFix { bug_id, commits } => write!(f, "{bug_id}: fix spans {commits} commits"),
            Self::AddOnlyFix { bug_id } => write!(f, "{bug_id}: fix only adds code"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BugLabels {
    pub bug_id: String,
    pub labeling: Labeling,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LabelReport {
    /// Kept bugs in manifest order.
    pub bugs: Vec<BugLabels>,
    pub warnings: Vec<DatasetWarning>,
    /// Bugs removed by strict mode.
    pub dropped: Vec<String>,
}

impl LabelReport {
    pub fn labels(&self, bug_id: &str) -> Option<&Labeling> {
        self.bugs.iter().find(|b| b.bug_id == bug_id).map(|b| &b.labeling)
    }
}

/// Labels every bug and collects exclusion warnings. In strict mode bugs
/// with an excluding warning are dropped.
pub fn label_manifest(manifest: &DatasetManifest, strict: bool) -> LabelReport {
    let mut report = LabelReport::default();
    for bug in &manifest.bugs {
        let methods = manifest.methods(&bug.bug_id);
        let hunks = manifest.hunks(&bug.bug_id);
        let labeling = label_buggy_methods(methods, hunks);
        let mut warnings = Vec::new();
        if !labeling.orphan_lines.is_empty() {
            warnings.push(DatasetWarning::OutsideMethods {
                bug_id: bug.bug_id.clone(),
                lines: labeling.orphan_lines.iter().cloned().collect(),
            });
        }
        if labeling.buggy.is_empty() {
            warnings.push(DatasetWarning::NoBuggyMethods {
                bug_id: bug.bug_id.clone(),
            });
        } else if methods
            .iter()
            .filter(|m| labeling.buggy.contains(&m.method_id))
            .all(MethodRecord::constructor)
        {
            warnings.push(DatasetWarning::ConstructorOnly {
                bug_id: bug.bug_id.clone(),
            });
        }
        if bug.fix_commits > 1 {
            warnings.push(DatasetWarning::MultiCommitFix {
                bug_id: bug.bug_id.clone(),
                commits: bug.fix_commits,
            });
        }
        if !hunks.is_empty() && hunks.iter().all(|h| h.add_only) {
            warnings.push(DatasetWarning::AddOnlyFix {
                bug_id: bug.bug_id.clone(),
            });
        }
        for w in &warnings {
            log::warn!("{w}");
        }
        let drop = strict && warnings.iter().any(DatasetWarning::excludes);
        report.warnings.extend(warnings);
        if drop {
            report.dropped.push(bug.bug_id.clone());
        } else {
            report.bugs.push(BugLabels {
                bug_id: bug.bug_id.clone(),
                labeling,
            });
        }
    }
    report
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManifestStats {
    pub bug_count: usize,
    pub mean_methods: f64,
    pub mean_buggy_methods: f64,
}

/// `num / den` rounded half-up to two decimals, computed in integers.
fn round2(num: usize, den: usize) -> f64 {
    if den == 0 {
        return 0.0;
    }
    let hundredths = (200 * num + den) / (2 * den);
    hundredths as f64 / 100.0
}

pub fn summarize_manifest(manifest: &DatasetManifest) -> ManifestStats {
    let labels = label_manifest(manifest, false);
    let n = manifest.bugs.len();
    let methods: usize = manifest.bugs.iter().map(|b| manifest.methods(&b.bug_id).len()).sum();
    let buggy: usize = labels.bugs.iter().map(|b| b.labeling.buggy.len()).sum();
    ManifestStats {
        bug_count: n,
        mean_methods: round2(methods, n),
        mean_buggy_methods: round2(buggy, n),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn method(id: &str, file: &str, start: u32, end: u32) -> MethodRecord {
        MethodRecord {
            method_id: id.into(),
            file: file.into(),
            name: id.into(),
            start_line: start,
            end_line: end,
            ast_ref: id.into(),
            is_constructor: None,
        }
    }

    fn hunk(file: &str, lines: &[u32]) -> DiffHunk {
        DiffHunk {
            file: file.into(),
            changed_lines: lines.iter().copied().collect(),
            add_only: false,
        }
    }

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn labeling_examples() {
        let methods = [method("m1", "A.java", 10, 20), method("m2", "A.java", 30, 40)];
        let l = label_buggy_methods(&methods, &[hunk("A.java", &[12, 35])]);
        assert_eq!(l.buggy, set(&["m1", "m2"]));
        assert!(l.orphan_lines.is_empty());

        let l = label_buggy_methods(&methods, &[hunk("A.java", &[25])]);
        assert!(l.buggy.is_empty());
        assert_eq!(l.orphan_lines, [("A.java".to_string(), 25)].into());

        let l = label_buggy_methods(&methods, &[hunk("A.java", &[20])]);
        assert_eq!(l.buggy, set(&["m1"]));

        // same lines, different file
        let l = label_buggy_methods(&methods, &[hunk("B.java", &[12])]);
        assert!(l.buggy.is_empty());
        assert_eq!(l.orphan_lines.len(), 1);
    }

    fn manifest_json() -> &'static str {
        r#"{
          "bugs": [
            {"bug_id": "B1", "title": "t", "description": "d", "report_time_epoch": 10},
            {"bug_id": "B2", "title": "t", "description": "d", "report_time_epoch": 20, "fix_commits": 2}
          ],
          "methods": {
            "B1": [{"method_id": "m1", "file": "Foo.java", "name": "Foo", "start_line": 1, "end_line": 5, "ast_ref": "a1"},
                   {"method_id": "m2", "file": "Foo.java", "name": "run", "start_line": 7, "end_line": 9, "ast_ref": "a2"}],
            "B2": [{"method_id": "m2", "file": "Foo.java", "name": "run", "start_line": 7, "end_line": 9, "ast_ref": "a2"}]
          },
          "hunks": {
            "B1": [{"file": "Foo.java", "changed_lines": [3]}],
            "B2": [{"file": "Foo.java", "changed_lines": [8, 12], "add_only": true}]
          },
          "ast_document": "asts.json"
        }"#
    }

    #[test]
    fn loads_and_validates() {
        let m = DatasetManifest::from_json(manifest_json(), "mem").unwrap();
        assert_eq!(m.bugs.len(), 2);
        assert_eq!(m.bugs[1].fix_commits, 2);
        assert_eq!(m.methods("B1").len(), 2);
        assert!(m.methods("nope").is_empty());

        let dup = manifest_json().replace("\"B2\", \"title\"", "\"B1\", \"title\"");
        assert!(matches!(
            DatasetManifest::from_json(&dup, "mem"),
            Err(Error::DuplicateId { kind: "bug", .. })
        ));
        let dangling = manifest_json().replace("\"B2\": [{\"method_id\"", "\"B9\": [{\"method_id\"");
        assert!(matches!(
            DatasetManifest::from_json(&dangling, "mem"),
            Err(Error::DanglingReference(_))
        ));
        assert!(matches!(
            DatasetManifest::from_json("{", "mem"),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn cross_check_finds_missing_ast() {
        let m = DatasetManifest::from_json(manifest_json(), "mem").unwrap();
        let mut asts = BTreeMap::new();
        asts.insert("a1".to_string(), AstNode::leaf("Name", "x"));
        assert!(matches!(m.cross_check(&asts), Err(Error::DanglingReference(_))));
        asts.insert("a2".to_string(), AstNode::leaf("Name", "y"));
        m.cross_check(&asts).unwrap();
    }

    #[test]
    fn warnings_and_strict_mode() {
        let m = DatasetManifest::from_json(manifest_json(), "mem").unwrap();
        let lenient = label_manifest(&m, false);
        assert_eq!(lenient.bugs.len(), 2);
        let kinds: Vec<String> = lenient.warnings.iter().map(|w| w.to_string()).collect();
        assert_eq!(
            kinds,
            [
                "B1: only constructors are buggy",
                "B2: changed lines outside methods: Foo.java:12",
                "B2: fix spans 2 commits",
                "B2: fix only adds code",
            ]
        );
        let strict = label_manifest(&m, true);
        assert!(strict.bugs.is_empty());
        assert_eq!(strict.dropped, ["B1", "B2"]);
    }

    #[test]
    fn summary_examples() {
        let mut m = DatasetManifest {
            bugs: Vec::new(),
            methods_per_bug: BTreeMap::new(),
            hunks_per_bug: BTreeMap::new(),
            ast_document: None,
            base_dir: PathBuf::new(),
        };
        assert_eq!(
            summarize_manifest(&m),
            ManifestStats {
                bug_count: 0,
                mean_methods: 0.0,
                mean_buggy_methods: 0.0
            }
        );
        for (b, n, buggy) in [("X", 4, 1), ("Y", 6, 3)] {
            m.bugs.push(BugRecord {
                bug_id: b.into(),
                title: String::new(),
                description: String::new(),
                report_time: 0,
                fix_commits: 1,
            });
            let methods: Vec<MethodRecord> = (0..n)
                .map(|i| method(&format!("{b}{i}"), "F.java", 10 * i + 1, 10 * i + 5))
                .collect();
            let lines: Vec<u32> = (0..buggy).map(|i| 10 * i + 2).collect();
            m.methods_per_bug.insert(b.into(), methods);
            m.hunks_per_bug.insert(b.into(), vec![hunk("F.java", &lines)]);
        }
        assert_eq!(
            summarize_manifest(&m),
            ManifestStats {
                bug_count: 2,
                mean_methods: 5.0,
                mean_buggy_methods: 2.0
            }
        );
    }

    #[test]
    fn rounding_is_half_up_on_exact_rationals() {
        assert_eq!(round2(1, 8), 0.13); // 0.125
        assert_eq!(round2(2, 3), 0.67);
        assert_eq!(round2(1, 3), 0.33);
        assert_eq!(round2(0, 5), 0.0);
    }
}
