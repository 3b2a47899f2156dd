use std::collections::HashSet;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Dataset role of one manifest entry, mirroring the train / validation /
/// same-organ test / different-organ test division.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SplitTag {
    Train,
    Validation,
    SameTest,
    DifferentTest,
}

impl SplitTag {
    pub fn parse(s: &str) -> Option<SplitTag> {
        match s {
            "train" => Some(SplitTag::Train),
            "validation" => Some(SplitTag::Validation),
            "same_test" => Some(SplitTag::SameTest),
            "different_test" => Some(SplitTag::DifferentTest),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            SplitTag::Train => "train",
            SplitTag::Validation => "validation",
            SplitTag::SameTest => "same_test",
            SplitTag::DifferentTest => "different_test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub split: SplitTag,
    pub organ: String,
    pub image_path: PathBuf,
    pub mask_path: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DatasetManifest {
    entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn split(&self, tag: SplitTag) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == tag)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Parse a `split,organ,image_path[,mask_path]` manifest. Relative paths are
/// resolved against the manifest's directory; every referenced file must
/// exist, train entries must carry masks, and image paths must be unique.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = std::fs::read_to_string(path)?;
    let base = path.parent().unwrap_or(Path::new(""));
    let mut entries = Vec::new();
    let mut seen = HashSet::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let fail = |reason: String| Error::Manifest {
            line: line_no,
            reason,
        };
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }

        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if !(3..=4).contains(&fields.len()) {
            return Err(fail(format!(
                "expected split,organ,image_path[,mask_path], got {} fields",
                fields.len()
            )));
        }
        let split = SplitTag::parse(fields[0])
            .ok_or_else(|| fail(format!("unknown split tag '{}'", fields[0])))?;
        let organ = fields[1];
        if organ.is_empty() {
            return Err(fail("empty organ tag".into()));
        }
        if fields[2].is_empty() {
            return Err(fail("empty image path".into()));
        }

        let image_path = resolve(base, fields[2]);
        if !seen.insert(image_path.clone()) {
            return Err(fail(format!("duplicate image path '{}'", fields[2])));
        }
        if !image_path.is_file() {
            return Err(fail(format!("image file '{}' not found", fields[2])));
        }

        let mask_path = match fields.get(3) {
            Some(f) if !f.is_empty() => {
                let p = resolve(base, f);
                if !p.is_file() {
                    return Err(fail(format!("mask file '{f}' not found")));
                }
                Some(p)
            }
            _ => None,
        };
        if split == SplitTag::Train && mask_path.is_none() {
            return Err(fail("train entry without a mask path".into()));
        }

        entries.push(ManifestEntry {
            split,
            organ: organ.to_string(),
            image_path,
            mask_path,
        });
    }

    Ok(DatasetManifest { entries })
}

fn resolve(base: &Path, field: &str) -> PathBuf {
    let p = Path::new(field);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_fixture(dir: &Path, names: &[&str]) {
        for n in names {
            std::fs::write(dir.join(n), b"x").unwrap();
        }
    }

    fn load_text(dir: &Path, text: &str) -> Result<DatasetManifest> {
        let path = dir.join("data.manifest");
        std::fs::write(&path, text).unwrap();
        load_manifest(&path)
    }

    #[test]
    fn empty_file_gives_empty_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let m = load_text(dir.path(), "").unwrap();
        assert!(m.is_empty());
    }

    #[test]
    fn four_line_fixture_parses_with_tags() {
        let dir = tempfile::tempdir().unwrap();
        write_fixture(dir.path(), &["a.png", "a_mask.png", "b.png", "c.png", "d.png", "d_mask.png"]);
        let m = load_text(
            dir.path(),
            "# dataset fixture\n\
             train,breast,a.png,a_mask.png\n\
             \n\
             same_test,breast,b.png\n\
             different_test,bladder,c.png\n\
             validation,kidney,d.png,d_mask.png\n",
        )
        .unwrap();
        assert_eq!(m.len(), 4);
        assert_eq!(m.entries()[0].split, SplitTag::Train);
        assert_eq!(m.entries()[1].organ, "breast");
        assert!(m.entries()[1].mask_path.is_none());
        assert_eq!(m.split(SplitTag::DifferentTest).count(), 1);
        assert_eq!(
            m.entries()[0].image_path,
            dir.path().join("a.png"),
            "relative paths resolve against the manifest directory"
        );
    }

    #[test]
    fn train_without_mask_is_rejected_with_line_number() {
        let dir = tempfile::tempdir().unwrap();
        write_fixture(dir.path(), &["a.png"]);
        let err = load_text(dir.path(), "# header\ntrain,breast,a.png\n").unwrap_err();
        match err {
            Error::Manifest { line, reason } => {
                assert_eq!(line, 2);
                assert!(reason.contains("mask"));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn unknown_split_and_bad_field_counts_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_fixture(dir.path(), &["a.png"]);
        assert!(load_text(dir.path(), "test,breast,a.png\n").is_err());
        assert!(load_text(dir.path(), "same_test,breast\n").is_err());
        assert!(load_text(dir.path(), "same_test,breast,a.png,m.png,extra\n").is_err());
    }

    #[test]
    fn duplicate_image_paths_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_fixture(dir.path(), &["a.png"]);
        let err = load_text(
            dir.path(),
            "same_test,breast,a.png\nsame_test,kidney,a.png\n",
        )
        .unwrap_err();
        match err {
            Error::Manifest { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn missing_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_text(dir.path(), "same_test,breast,ghost.png\n").is_err());
        write_fixture(dir.path(), &["a.png"]);
        assert!(load_text(dir.path(), "train,breast,a.png,ghost_mask.png\n").is_err());
    }
}
