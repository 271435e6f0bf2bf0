use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::metrics::FVariant;

/// Scores of one frame. `f` and `jf` use the report's headline variant; both
/// F variants are always present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameResult {
    pub image_id: String,
    pub sequence: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub category: Option<String>,
    pub tolerance_px: usize,
    pub j: f64,
    pub f_region: f64,
    pub f_boundary: f64,
    pub f: f64,
    pub jf: f64,
}

impl FrameResult {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        image_id: String,
        sequence: String,
        category: Option<String>,
        tolerance_px: usize,
        j: f64,
        f_region: f64,
        f_boundary: f64,
        variant: FVariant,
    ) -> Self {
        let f = match variant {
            FVariant::Region => f_region,
            FVariant::Boundary => f_boundary,
        };
        FrameResult {
            image_id,
            sequence,
            category,
            tolerance_px,
            j,
            f_region,
            f_boundary,
            f,
            jf: (j + f) / 2.0,
        }
    }
}

/// Arithmetic means over a group's members.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Means {
    pub j: f64,
    pub f_region: f64,
    pub f_boundary: f64,
    pub f: f64,
    pub jf: f64,
}

impl Means {
    fn of<'a>(members: impl IntoIterator<Item = &'a Means>) -> Means {
        let members: Vec<&Means> = members.into_iter().collect();
        let mean = |pick: fn(&Means) -> f64| members.iter().map(|m| pick(m)).sum::<f64>() / members.len() as f64;
        Means {
            j: mean(|m| m.j),
            f_region: mean(|m| m.f_region),
            f_boundary: mean(|m| m.f_boundary),
            f: mean(|m| m.f),
            jf: mean(|m| m.jf),
        }
    }
}

impl From<&FrameResult> for Means {
    fn from(r: &FrameResult) -> Self {
        Means {
            j: r.j,
            f_region: r.f_region,
            f_boundary: r.f_boundary,
            f: r.f,
            jf: r.jf,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceSummary {
    pub sequence: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub category: Option<String>,
    pub frames: usize,
    #[serde(flatten)]
    pub means: Means,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategorySummary {
    pub category: String,
    pub sequences: usize,
    #[serde(flatten)]
    pub means: Means,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Variant behind every `f` and `jf` field.
    pub f_variant: FVariant,
    pub note: String,
    pub frames: Vec<FrameResult>,
    pub sequences: Vec<SequenceSummary>,
    /// Present when frames carry categories.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub categories: Option<Vec<CategorySummary>>,
    /// Mean of category means when grouped, otherwise mean of sequence means.
    pub overall: Means,
    pub overall_by_sequence: Means,
}

const NOTE: &str = "J is intersection over union. F is reported in two variants: `f_region` is the harmonic \
mean of pixel precision and recall, `f_boundary` the same over boundary pixels matched within `tolerance_px`. \
`f` and `jf` use the variant named in `f_variant`. Empty ground truth predicted empty scores 1.";

impl EvalReport {
    /// Groups frames by sequence and category. Sequences and categories are
    /// ordered by name; frames keep their given order.
    ///
    /// Panics if `frames` is empty or a sequence spans several categories.
    pub fn from_frames(frames: Vec<FrameResult>, f_variant: FVariant) -> EvalReport {
        assert!(!frames.is_empty(), "cannot summarise an empty evaluation");
        let mut by_seq: BTreeMap<&str, Vec<&FrameResult>> = BTreeMap::new();
        for f in &frames {
            by_seq.entry(&f.sequence).or_default().push(f);
        }
        let sequences: Vec<SequenceSummary> = by_seq
            .into_iter()
            .map(|(name, members)| {
                let category = members[0].category.clone();
                assert!(
                    members.iter().all(|m| m.category == category),
                    "sequence `{name}` spans several categories"
                );
                let means: Vec<Means> = members.iter().map(|m| Means::from(*m)).collect();
                SequenceSummary {
                    sequence: name.to_string(),
                    category,
                    frames: members.len(),
                    means: Means::of(&means),
                }
            })
            .collect();
        let overall_by_sequence = Means::of(sequences.iter().map(|s| &s.means));

        let categories = sequences.iter().all(|s| s.category.is_some()).then(|| {
            let mut by_cat: BTreeMap<&str, Vec<&Means>> = BTreeMap::new();
            for s in &sequences {
                by_cat.entry(s.category.as_deref().unwrap()).or_default().push(&s.means);
            }
            by_cat
                .into_iter()
                .map(|(name, members)| CategorySummary {
                    category: name.to_string(),
                    sequences: members.len(),
                    means: Means::of(members),
                })
                .collect::<Vec<_>>()
        });
        let overall = match &categories {
            Some(cats) => Means::of(cats.iter().map(|c| &c.means)),
            None => overall_by_sequence,
        };
        EvalReport {
            f_variant,
            note: NOTE.to_string(),
            frames,
            sequences,
            categories,
            overall,
            overall_by_sequence,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// One row per frame with every score at full precision.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("image_id,sequence,category,tolerance_px,j,f_region,f_boundary,f,jf\n");
        for f in &self.frames {
            let _ = writeln!(
                out,
                "{},{},{},{},{:?},{:?},{:?},{:?},{:?}",
                f.image_id,
                f.sequence,
                f.category.as_deref().unwrap_or(""),
                f.tolerance_px,
                f.j,
                f.f_region,
                f.f_boundary,
                f.f,
                f.jf
            );
        }
        out
    }

    /// Aligned summary: one row per sequence, then per category, then the mean.
    pub fn to_table(&self) -> String {
        let mut rows: Vec<(String, String, Means)> = self
            .sequences
            .iter()
            .map(|s| (s.sequence.clone(), s.frames.to_string(), s.means))
            .collect();
        if let Some(cats) = &self.categories {
            rows.extend(cats.iter().map(|c| (format!("[{}]", c.category), format!("{} seq", c.sequences), c.means)));
        }
        rows.push(("Mean".to_string(), self.frames.len().to_string(), self.overall));
        let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0).max(8);
        let mut out = String::new();
        let _ = writeln!(out, "F variant: {}", self.f_variant);
        let _ = writeln!(
            out,
            "{:<width$}  {:>7}  {:>6}  {:>6}  {:>8}  {:>10}",
            "name", "frames", "J&F", "J", "F", "F(other)"
        );
        for (name, count, m) in rows {
            let other = match self.f_variant {
                FVariant::Region => m.f_boundary,
                FVariant::Boundary => m.f_region,
            };
            let _ = writeln!(
                out,
                "{:<width$}  {:>7}  {:>6.3}  {:>6.3}  {:>8.3}  {:>10.3}",
                name, count, m.jf, m.j, m.f, other
            );
        }
        out
    }
}
