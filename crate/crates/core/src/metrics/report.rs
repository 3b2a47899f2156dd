/// Which held-out group a test image belongs to: organs also present in
/// training, or organs never seen during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestGroup {
    Same,
    Different,
}

/// Per-image metric values plus the labels needed for grouping.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageScores {
    pub image: String,
    pub organ: String,
    pub group: TestGroup,
    pub ji: f64,
    pub f1: f64,
    pub abd: f64,
    pub ov: f64,
}

/// Evaluation results for a whole test set, aggregated per group and overall.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    rows: Vec<ImageScores>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregateScores {
    pub ji: f64,
    pub f1: f64,
    pub abd: f64,
    pub ov: f64,
}

impl MetricsReport {
    pub fn new(rows: Vec<ImageScores>) -> Self {
        MetricsReport { rows }
    }

    pub fn rows(&self) -> &[ImageScores] {
        &self.rows
    }

    /// Mean of every metric over one group, or over all rows when `group` is
    /// `None`. Empty selections have no mean.
    pub fn aggregate(&self, group: Option<TestGroup>) -> Option<AggregateScores> {
        let selected: Vec<&ImageScores> = self
            .rows
            .iter()
            .filter(|r| group.is_none_or(|g| r.group == g))
            .collect();
        if selected.is_empty() {
            return None;
        }
        let n = selected.len() as f64;
        Some(AggregateScores {
            ji: selected.iter().map(|r| r.ji).sum::<f64>() / n,
            f1: selected.iter().map(|r| r.f1).sum::<f64>() / n,
            abd: selected.iter().map(|r| r.abd).sum::<f64>() / n,
            ov: selected.iter().map(|r| r.ov).sum::<f64>() / n,
        })
    }

    /// CSV with one row per image followed by the three aggregate rows.
    /// Aggregates over an empty group leave the value cells blank.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("image,organ,ji,f1,abd,ov\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.image, r.organ, r.ji, r.f1, r.abd, r.ov
            ));
        }
        let groups = [
            ("__same__", Some(TestGroup::Same)),
            ("__different__", Some(TestGroup::Different)),
            ("__overall__", None),
        ];
        for (name, group) in groups {
            match self.aggregate(group) {
                Some(a) => out.push_str(&format!(
                    "{},,{},{},{},{}\n",
                    name, a.ji, a.f1, a.abd, a.ov
                )),
                None => out.push_str(&format!("{name},,,,,\n")),
            }
        }
        out
    }
}
