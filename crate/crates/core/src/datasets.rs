//! CSV ingestion and text-derived features.
//!
//! Input files are UTF-8 CSV with a header: `id`, `text`, optional `title`,
//! optional extra columns (categorical labels, numeric covariates), the gold
//! outcome `y_expert`, and one `y_llm_<source>` column per annotator.
//!
//! Counting rules:
//!
//! - characters are Unicode scalar values;
//! - words are maximal runs of non-whitespace;
//! - capital letters are characters with the Unicode uppercase property;
//! - literal tokens are whitespace-delimited tokens compared after stripping
//!   leading and trailing characters that are neither alphanumeric nor
//!   whitespace.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AnnotatedCorpus, Row};
use crate::seed;

/// Domain labels of the multi-domain sentiment corpus, coded 0..=5.
pub const DOMAINS: &str = include_str!("../data/domains.txt");
/// Occupation labels of the biographies corpus, coded 0..=27.
pub const OCCUPATIONS: &str = include_str!("../data/occupations.txt");

fn mapping(list: &str) -> Vec<String> {
    list.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetName {
    MultidomainSentiment,
    MisinfoGeneral,
    BiasInBios,
    Germeval18,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotationSource {
    Bert,
    Deepseek,
    Phi4,
    Claude,
    Custom(String),
}

impl AnnotationSource {
    pub fn column(&self) -> String {
        let name = match self {
            AnnotationSource::Bert => "bert",
            AnnotationSource::Deepseek => "deepseek",
            AnnotationSource::Phi4 => "phi4",
            AnnotationSource::Claude => "claude",
            AnnotationSource::Custom(s) => s,
        };
        format!("y_llm_{name}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FeatureKind {
    CharCount,
    WhitespaceWordCount,
    CapitalLetterCount,
    LiteralTokenCount { token: String },
    /// Occurrences of a single character anywhere in the text.
    CharOccurrences { ch: char },
    TitleCharCount,
    /// Index of the value in `mapping`.
    CategoricalCode { mapping: Vec<String> },
    /// Column parsed as a real number.
    Numeric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDef {
    pub name: String,
    pub kind: FeatureKind,
    pub source_column: String,
}

impl FeatureDef {
    pub fn new(name: &str, kind: FeatureKind, source_column: &str) -> Self {
        Self {
            name: name.into(),
            kind,
            source_column: source_column.into(),
        }
    }

    fn compute(&self, value: &str, row_id: &str) -> Result<f64> {
        Ok(match &self.kind {
            FeatureKind::CharCount | FeatureKind::TitleCharCount => char_count(value) as f64,
            FeatureKind::WhitespaceWordCount => whitespace_word_count(value) as f64,
            FeatureKind::CapitalLetterCount => capital_letter_count(value) as f64,
            FeatureKind::LiteralTokenCount { token } => literal_token_count(value, token) as f64,
            FeatureKind::CharOccurrences { ch } => value.chars().filter(|c| c == ch).count() as f64,
            FeatureKind::CategoricalCode { mapping } => {
                let v = value.trim();
                mapping.iter().position(|m| m == v).ok_or_else(|| Error::Parse {
                    row: row_id.into(),
                    message: format!("value '{v}' of column {} has no categorical code", self.source_column),
                })? as f64
            }
            FeatureKind::Numeric => value.trim().parse::<f64>().map_err(|_| Error::Parse {
                row: row_id.into(),
                message: format!("column {} value '{value}' is not a number", self.source_column),
            })?,
        })
    }
}

pub fn char_count(text: &str) -> usize {
    text.chars().count()
}

pub fn whitespace_word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

pub fn capital_letter_count(text: &str) -> usize {
    text.chars().filter(|c| c.is_uppercase()).count()
}

fn strip_token(t: &str) -> &str {
    t.trim_matches(|c: char| !c.is_alphanumeric() && !c.is_whitespace())
}

pub fn literal_token_count(text: &str, token: &str) -> usize {
    let target = strip_token(token);
    text.split_whitespace().filter(|t| strip_token(t) == target).count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub name: DatasetName,
    #[serde(default = "default_id_column")]
    pub id_column: String,
    #[serde(default = "default_outcome_column")]
    pub outcome_column: String,
    pub feature_recipe: Vec<FeatureDef>,
    pub annotation_source: AnnotationSource,
}

fn default_id_column() -> String {
    "id".into()
}

fn default_outcome_column() -> String {
    "y_expert".into()
}

impl DatasetSpec {
    /// The four-feature recipe used for each of the benchmark corpora.
    pub fn preset(name: DatasetName, annotation_source: AnnotationSource) -> Result<Self> {
        use FeatureKind::*;
        let text = "text";
        let recipe = match name {
            DatasetName::MultidomainSentiment => vec![
                FeatureDef::new("x1", CategoricalCode { mapping: mapping(DOMAINS) }, "domain"),
                FeatureDef::new("x2", CharCount, text),
                FeatureDef::new("x3", WhitespaceWordCount, text),
                FeatureDef::new("x4", LiteralTokenCount { token: "I".into() }, text),
            ],
            DatasetName::MisinfoGeneral => vec![
                FeatureDef::new("x1", CharCount, text),
                FeatureDef::new("x2", WhitespaceWordCount, text),
                FeatureDef::new("x3", CapitalLetterCount, text),
                FeatureDef::new("x4", TitleCharCount, "title"),
            ],
            DatasetName::BiasInBios => vec![
                FeatureDef::new("x1", CategoricalCode { mapping: mapping(OCCUPATIONS) }, "occupation"),
                FeatureDef::new("x2", CharCount, text),
                FeatureDef::new("x3", WhitespaceWordCount, text),
                FeatureDef::new("x4", CapitalLetterCount, text),
            ],
            DatasetName::Germeval18 => vec![
                FeatureDef::new("x1", CharCount, text),
                FeatureDef::new("x2", WhitespaceWordCount, text),
                FeatureDef::new("x3", CapitalLetterCount, text),
                FeatureDef::new("x4", CharOccurrences { ch: '@' }, text),
            ],
            DatasetName::Custom => {
                return Err(Error::invalid("custom datasets need an explicit feature recipe"));
            }
        };
        Ok(Self {
            name,
            id_column: default_id_column(),
            outcome_column: default_outcome_column(),
            feature_recipe: recipe,
            annotation_source,
        })
    }

    /// Spec for a canonical corpus file: numeric feature columns by name.
    pub fn canonical(feature_names: &[String], annotation_source: AnnotationSource) -> Self {
        Self {
            name: DatasetName::Custom,
            id_column: default_id_column(),
            outcome_column: default_outcome_column(),
            feature_recipe: feature_names
                .iter()
                .map(|n| FeatureDef::new(n, FeatureKind::Numeric, n))
                .collect(),
            annotation_source,
        }
    }
}

enum Label {
    Missing,
    Value(bool),
    Invalid,
}

fn parse_label(s: &str) -> Label {
    match s.trim() {
        "" => Label::Missing,
        "0" | "0.0" => Label::Value(false),
        "1" | "1.0" => Label::Value(true),
        _ => Label::Invalid,
    }
}

/// Reads a corpus from a CSV file.
pub fn load_corpus(path: impl AsRef<Path>, spec: &DatasetSpec) -> Result<AnnotatedCorpus> {
    let file = std::fs::File::open(path.as_ref())?;
    load_corpus_from_reader(file, spec)
}

/// Reads a corpus from any CSV source. Rows whose LLM annotation is missing
/// or not binary are dropped; the count is stored as `dropped_rows` metadata.
pub fn load_corpus_from_reader<R: Read>(reader: R, spec: &DatasetSpec) -> Result<AnnotatedCorpus> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("missing column '{name}'")))
    };
    let id_col = column(&spec.id_column)?;
    let outcome_col = column(&spec.outcome_column)?;
    let llm_col = column(&spec.annotation_source.column())?;
    let feature_cols = spec
        .feature_recipe
        .iter()
        .map(|f| match (&f.kind, column(&f.source_column)) {
            // A corpus without titles has title length zero.
            (FeatureKind::TitleCharCount, Err(_)) => Ok(None),
            (_, c) => c.map(Some),
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    let mut dropped = 0usize;
    for record in rdr.records() {
        let record = record?;
        let id = record.get(id_col).unwrap_or_default().to_string();
        let y_expert = match parse_label(record.get(outcome_col).unwrap_or_default()) {
            Label::Missing => None,
            Label::Value(v) => Some(v),
            Label::Invalid => {
                return Err(Error::Parse {
                    row: id,
                    message: format!(
                        "outcome '{}' is not binary",
                        record.get(outcome_col).unwrap_or_default()
                    ),
                });
            }
        };
        let y_llm = match parse_label(record.get(llm_col).unwrap_or_default()) {
            Label::Value(v) => v,
            Label::Missing | Label::Invalid => {
                dropped += 1;
                continue;
            }
        };
        let x = spec
            .feature_recipe
            .iter()
            .zip(&feature_cols)
            .map(|(f, col)| {
                let value = col.and_then(|c| record.get(c)).unwrap_or_default();
                f.compute(value, &id)
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(Row { id, x, y_expert, y_llm });
    }
    let names = spec.feature_recipe.iter().map(|f| f.name.clone()).collect();
    Ok(AnnotatedCorpus::with_feature_names(rows, names)?.with_metadata("dropped_rows", dropped as f64))
}

/// Reads a canonical corpus file, taking every column other than `id`,
/// `y_expert` and the `y_llm_*` column as a numeric feature.
pub fn load_canonical(path: impl AsRef<Path>) -> Result<AnnotatedCorpus> {
    let bytes = std::fs::read(path.as_ref())?;
    load_canonical_from_reader(bytes.as_slice())
}

pub fn load_canonical_from_reader<R: Read>(mut reader: R) -> Result<AnnotatedCorpus> {
    let mut buf = Vec::new();
    reader.read_to_end(&mut buf)?;
    let headers = csv::Reader::from_reader(buf.as_slice()).headers()?.clone();
    let llm: Vec<&str> = headers.iter().filter(|h| h.starts_with("y_llm_")).collect();
    let source = match llm.as_slice() {
        [one] => one.trim_start_matches("y_llm_").to_string(),
        [] => return Err(Error::Schema("missing column 'y_llm_<source>'".into())),
        _ => return Err(Error::Schema("canonical corpus must have exactly one y_llm_<source> column".into())),
    };
    let features: Vec<String> = headers
        .iter()
        .filter(|h| *h != "id" && *h != "y_expert" && !h.starts_with("y_llm_"))
        .map(String::from)
        .collect();
    let spec = DatasetSpec::canonical(&features, AnnotationSource::Custom(source));
    load_corpus_from_reader(buf.as_slice(), &spec)
}

/// Writes `id, <features...>, y_expert, y_llm_<source>`. Hidden gold labels
/// are written as empty fields.
pub fn write_canonical_csv<W: Write>(corpus: &AnnotatedCorpus, source: &str, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["id".to_string()];
    header.extend(corpus.feature_names().iter().cloned());
    header.push("y_expert".into());
    header.push(format!("y_llm_{source}"));
    w.write_record(&header)?;
    for row in corpus.rows() {
        let mut rec = vec![row.id.clone()];
        rec.extend(row.x.iter().map(|v| v.to_string()));
        rec.push(row.y_expert.map_or(String::new(), |y| (y as u8).to_string()));
        rec.push((row.y_llm as u8).to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Downsamples the majority gold class to the minority count. Surviving rows
/// keep their original order.
pub fn balance_subset(corpus: &AnnotatedCorpus, seed_value: u64) -> Result<AnnotatedCorpus> {
    let mut classes: BTreeMap<bool, Vec<usize>> = BTreeMap::new();
    for (i, row) in corpus.rows().iter().enumerate() {
        let y = row
            .y_expert
            .ok_or_else(|| Error::invalid(format!("row {} has no gold label to balance on", row.id)))?;
        classes.entry(y).or_default().push(i);
    }
    let (Some(neg), Some(pos)) = (classes.get(&false), classes.get(&true)) else {
        return Err(Error::invalid("balancing needs both outcome classes"));
    };
    let target = neg.len().min(pos.len());
    let mut rng = seed::rng(seed_value);
    let mut keep = Vec::with_capacity(2 * target);
    for members in [neg, pos] {
        if members.len() == target {
            keep.extend_from_slice(members);
        } else {
            keep.extend(rand::seq::index::sample(&mut rng, members.len(), target).into_iter().map(|k| members[k]));
        }
    }
    keep.sort_unstable();
    corpus.subset(&keep)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counting_rules() {
        assert_eq!(whitespace_word_count("a b c"), 3);
        assert_eq!(char_count("a b c"), 5);
        assert_eq!(literal_token_count("I think I will", "I"), 2);
        assert_eq!(literal_token_count("\"I\" said: I, then I'm", "I"), 2);
        assert_eq!(char_count("héllo"), 5);
        assert_eq!(capital_letter_count("Hello World ÄÖ"), 4);
        assert_eq!(whitespace_word_count("  spaced\tout\n words "), 3);
    }

    #[test]
    fn shipped_mappings_sizes() {
        assert_eq!(mapping(DOMAINS).len(), 6);
        assert_eq!(mapping(OCCUPATIONS).len(), 28);
        let mut sorted = mapping(OCCUPATIONS);
        sorted.sort();
        assert_eq!(sorted, mapping(OCCUPATIONS));
    }

    const SENTIMENT: &str = "\
id,text,domain,y_expert,y_llm_phi4
a,I think I will,books,1,1
b,\"Great camera, works\",camera,0,
c,bad,software,0,0
d,meh meh,music,1,x
";

    #[test]
    fn loads_preset_and_drops_bad_annotations() {
        let spec = DatasetSpec::preset(DatasetName::MultidomainSentiment, AnnotationSource::Phi4).unwrap();
        let c = load_corpus_from_reader(SENTIMENT.as_bytes(), &spec).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.metadata()["dropped_rows"], 2.0);
        assert_eq!(c.rows()[0].x, vec![0.0, 14.0, 4.0, 2.0]);
        assert_eq!(c.rows()[1].x, vec![5.0, 3.0, 1.0, 0.0]);
    }

    #[test]
    fn missing_column_named() {
        let spec = DatasetSpec::preset(DatasetName::MultidomainSentiment, AnnotationSource::Claude).unwrap();
        match load_corpus_from_reader(SENTIMENT.as_bytes(), &spec) {
            Err(Error::Schema(msg)) => assert!(msg.contains("y_llm_claude")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn non_binary_outcome_names_row() {
        let csv = "id,text,y_expert,y_llm_bert\nr7,hi,2,1\n";
        let spec = DatasetSpec::preset(DatasetName::Germeval18, AnnotationSource::Bert).unwrap();
        match load_corpus_from_reader(csv.as_bytes(), &spec) {
            Err(Error::Parse { row, .. }) => assert_eq!(row, "r7"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_category_rejected() {
        let csv = "id,text,domain,y_expert,y_llm_bert\nr1,hi,garden,1,1\n";
        let spec = DatasetSpec::preset(DatasetName::MultidomainSentiment, AnnotationSource::Bert).unwrap();
        assert!(matches!(load_corpus_from_reader(csv.as_bytes(), &spec), Err(Error::Parse { .. })));
    }

    #[test]
    fn germeval_counts_at_signs() {
        let csv = "id,text,y_expert,y_llm_bert\nr1,@user hallo @zwei Welt,1,0\n";
        let spec = DatasetSpec::preset(DatasetName::Germeval18, AnnotationSource::Bert).unwrap();
        let c = load_corpus_from_reader(csv.as_bytes(), &spec).unwrap();
        assert_eq!(c.rows()[0].x, vec![22.0, 4.0, 1.0, 2.0]);
    }

    #[test]
    fn misinfo_title_optional() {
        let spec = DatasetSpec::preset(DatasetName::MisinfoGeneral, AnnotationSource::Bert).unwrap();
        let with_title = "id,text,title,y_expert,y_llm_bert\nr1,The Sun rises,Dawn,1,1\n";
        let c = load_corpus_from_reader(with_title.as_bytes(), &spec).unwrap();
        assert_eq!(c.rows()[0].x, vec![13.0, 3.0, 2.0, 4.0]);
        let without = "id,text,y_expert,y_llm_bert\nr1,The Sun rises,1,1\n";
        let c = load_corpus_from_reader(without.as_bytes(), &spec).unwrap();
        assert_eq!(c.rows()[0].x[3], 0.0);
    }

    #[test]
    fn canonical_round_trip() {
        let spec = DatasetSpec::preset(DatasetName::MultidomainSentiment, AnnotationSource::Phi4).unwrap();
        let c = load_corpus_from_reader(SENTIMENT.as_bytes(), &spec).unwrap();
        let mut buf = Vec::new();
        write_canonical_csv(&c, "phi4", &mut buf).unwrap();
        let back = load_canonical_from_reader(buf.as_slice()).unwrap();
        assert_eq!(back.rows(), c.rows());
        assert_eq!(back.feature_names(), c.feature_names());
    }

    #[test]
    fn reload_is_identical() {
        let spec = DatasetSpec::preset(DatasetName::MultidomainSentiment, AnnotationSource::Phi4).unwrap();
        let a = load_corpus_from_reader(SENTIMENT.as_bytes(), &spec).unwrap();
        let b = load_corpus_from_reader(SENTIMENT.as_bytes(), &spec).unwrap();
        assert_eq!(a, b);
    }

    fn labeled(ys: &[bool]) -> AnnotatedCorpus {
        let rows = ys
            .iter()
            .enumerate()
            .map(|(i, &y)| Row { id: i.to_string(), x: vec![i as f64], y_expert: Some(y), y_llm: y })
            .collect();
        AnnotatedCorpus::new(rows).unwrap()
    }

    #[test]
    fn balance_cases() {
        let even = labeled(&[true, false, true, false]);
        assert_eq!(balance_subset(&even, 1).unwrap(), even);

        let small = labeled(&[true, true, true, false]);
        let b = balance_subset(&small, 1).unwrap();
        assert_eq!(b.len(), 2);
        assert_eq!(b.rows().iter().filter(|r| r.y_expert == Some(true)).count(), 1);

        let mut ys = vec![true; 7000];
        ys.extend(vec![false; 5000]);
        let big = balance_subset(&labeled(&ys), 3).unwrap();
        assert_eq!(big.len(), 10_000);
        assert_eq!(big.rows().iter().filter(|r| r.y_expert == Some(true)).count(), 5000);
        let ids: Vec<usize> = big.rows().iter().map(|r| r.id.parse().unwrap()).collect();
        assert!(ids.windows(2).all(|w| w[0] < w[1]));

        assert!(balance_subset(&labeled(&[true, true]), 1).is_err());
    }
}
