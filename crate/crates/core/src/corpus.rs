//! Essays corpus loading, train/test splitting and label statistics.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::RngStream;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read corpus: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("column `{0}` not found in header")]
    MissingColumn(String),
    #[error("row {row}: {reason}")]
    Row { row: usize, reason: String },
    #[error("corpus is empty")]
    Empty,
    #[error("invalid split: {0}")]
    Split(String),
}

/// The five Big Five traits, in OCEAN order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Trait {
    #[serde(rename = "O")]
    Openness,
    #[serde(rename = "C")]
    Conscientiousness,
    #[serde(rename = "E")]
    Extraversion,
    #[serde(rename = "A")]
    Agreeableness,
    #[serde(rename = "N")]
    Neuroticism,
}

impl Trait {
    pub const ALL: [Trait; 5] = [
        Trait::Openness,
        Trait::Conscientiousness,
        Trait::Extraversion,
        Trait::Agreeableness,
        Trait::Neuroticism,
    ];

    pub fn letter(self) -> char {
        match self {
            Trait::Openness => 'O',
            Trait::Conscientiousness => 'C',
            Trait::Extraversion => 'E',
            Trait::Agreeableness => 'A',
            Trait::Neuroticism => 'N',
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Trait::Openness => "openness",
            Trait::Conscientiousness => "conscientiousness",
            Trait::Extraversion => "extraversion",
            Trait::Agreeableness => "agreeableness",
            Trait::Neuroticism => "neuroticism",
        }
    }
}

impl fmt::Display for Trait {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

impl FromStr for Trait {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        Trait::ALL
            .into_iter()
            .find(|t| lower == t.name() || lower == t.letter().to_ascii_lowercase().to_string())
            .ok_or_else(|| format!("unknown trait `{s}` (expected one of O, C, E, A, N)"))
    }
}

/// Binary Big Five labels; `true` means the trait is present.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TraitLabels {
    pub openness: bool,
    pub conscientiousness: bool,
    pub extraversion: bool,
    pub agreeableness: bool,
    pub neuroticism: bool,
}

impl TraitLabels {
    pub fn get(&self, t: Trait) -> bool {
        match t {
            Trait::Openness => self.openness,
            Trait::Conscientiousness => self.conscientiousness,
            Trait::Extraversion => self.extraversion,
            Trait::Agreeableness => self.agreeableness,
            Trait::Neuroticism => self.neuroticism,
        }
    }

    pub fn set(&mut self, t: Trait, value: bool) {
        match t {
            Trait::Openness => self.openness = value,
            Trait::Conscientiousness => self.conscientiousness = value,
            Trait::Extraversion => self.extraversion = value,
            Trait::Agreeableness => self.agreeableness = value,
            Trait::Neuroticism => self.neuroticism = value,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EssayRecord {
    pub id: String,
    pub text: String,
    pub labels: TraitLabels,
}

/// Header names for each field plus the label parse table. Defaults follow
/// the common Essays CSV release.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnMap {
    pub id: String,
    pub text: String,
    pub openness: String,
    pub conscientiousness: String,
    pub extraversion: String,
    pub agreeableness: String,
    pub neuroticism: String,
    /// Cell values (case-insensitive) read as "trait present".
    pub true_values: Vec<String>,
    /// Cell values (case-insensitive) read as "trait absent".
    pub false_values: Vec<String>,
}

impl Default for ColumnMap {
    fn default() -> Self {
        ColumnMap {
            id: "#AUTHID".into(),
            text: "TEXT".into(),
            openness: "cOPN".into(),
            conscientiousness: "cCON".into(),
            extraversion: "cEXT".into(),
            agreeableness: "cAGR".into(),
            neuroticism: "cNEU".into(),
            true_values: vec!["y".into(), "1".into(), "true".into()],
            false_values: vec!["n".into(), "0".into(), "false".into()],
        }
    }
}

impl ColumnMap {
    pub fn label_column(&self, t: Trait) -> &str {
        match t {
            Trait::Openness => &self.openness,
            Trait::Conscientiousness => &self.conscientiousness,
            Trait::Extraversion => &self.extraversion,
            Trait::Agreeableness => &self.agreeableness,
            Trait::Neuroticism => &self.neuroticism,
        }
    }

    fn parse_label(&self, cell: &str) -> Option<bool> {
        let cell = cell.trim();
        if self
            .true_values
            .iter()
            .any(|v| v.eq_ignore_ascii_case(cell))
        {
            Some(true)
        } else if self
            .false_values
            .iter()
            .any(|v| v.eq_ignore_ascii_case(cell))
        {
            Some(false)
        } else {
            None
        }
    }
}

/// Load a UTF-8 CSV corpus with a header row.
pub fn load_corpus(path: &Path, columns: &ColumnMap) -> Result<Vec<EssayRecord>, CorpusError> {
    let file = std::fs::File::open(path)?;
    read_corpus(file, columns)
}

/// Same as [`load_corpus`] over any reader.
pub fn read_corpus<R: std::io::Read>(
    reader: R,
    columns: &ColumnMap,
) -> Result<Vec<EssayRecord>, CorpusError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() {
        return Err(CorpusError::Empty);
    }
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| CorpusError::MissingColumn(name.to_string()))
    };
    let id_col = find(&columns.id)?;
    let text_col = find(&columns.text)?;
    let label_cols = Trait::ALL
        .iter()
        .map(|&t| find(columns.label_column(t)).map(|c| (t, c)))
        .collect::<Result<Vec<_>, _>>()?;

    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        // data rows are numbered from 1, after the header
        let row_no = i + 1;
        let cell = |c: usize| row.get(c).unwrap_or("");
        let id = cell(id_col).to_string();
        let text = cell(text_col).to_string();
        if text.trim().is_empty() {
            return Err(CorpusError::Row {
                row: row_no,
                reason: "empty text".into(),
            });
        }
        if !seen.insert(id.clone()) {
            return Err(CorpusError::Row {
                row: row_no,
                reason: format!("duplicate id `{id}`"),
            });
        }
        let mut labels = TraitLabels::default();
        for &(t, c) in &label_cols {
            let raw = cell(c);
            let v = columns.parse_label(raw).ok_or_else(|| CorpusError::Row {
                row: row_no,
                reason: format!("unparseable {} label `{raw}`", t.name()),
            })?;
            labels.set(t, v);
        }
        out.push(EssayRecord { id, text, labels });
    }
    if out.is_empty() {
        return Err(CorpusError::Empty);
    }
    Ok(out)
}

/// Write records as CSV under `columns`' headers, labels as the first
/// true/false value.
pub fn write_corpus<W: std::io::Write>(
    writer: W,
    records: &[EssayRecord],
    columns: &ColumnMap,
) -> Result<(), CorpusError> {
    let yes = columns.true_values.first().map_or("y", String::as_str);
    let no = columns.false_values.first().map_or("n", String::as_str);
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![columns.id.as_str(), columns.text.as_str()];
    header.extend(Trait::ALL.iter().map(|&t| columns.label_column(t)));
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![r.id.as_str(), r.text.as_str()];
        row.extend(
            Trait::ALL
                .iter()
                .map(|&t| if r.labels.get(t) { yes } else { no }),
        );
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
    /// Split each class of this trait separately.
    #[serde(default)]
    pub stratify: Option<Trait>,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: 0.8,
            seed: 0,
            stratify: None,
        }
    }
}

/// Seeded random partition. Without stratification `|train|` is
/// `round(train_fraction · N)`; with it, each class is rounded separately.
/// Both sides keep corpus order.
pub fn split_train_test(
    records: &[EssayRecord],
    spec: &SplitSpec,
) -> Result<(Vec<EssayRecord>, Vec<EssayRecord>), CorpusError> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(CorpusError::Split(format!(
            "train_fraction must be in (0, 1), got {}",
            spec.train_fraction
        )));
    }
    if records.is_empty() {
        return Err(CorpusError::Empty);
    }
    let mut rng = RngStream::new(spec.seed).split(0x5917);
    let groups: Vec<Vec<usize>> = match spec.stratify {
        None => vec![(0..records.len()).collect()],
        Some(t) => {
            let (pos, neg): (Vec<usize>, Vec<usize>) =
                (0..records.len()).partition(|&i| records[i].labels.get(t));
            vec![pos, neg]
        }
    };
    let mut in_train = vec![false; records.len()];
    for mut g in groups {
        rng.shuffle(&mut g);
        let n_train = (spec.train_fraction * g.len() as f64).round() as usize;
        for &i in &g[..n_train] {
            in_train[i] = true;
        }
    }
    let n_train = in_train.iter().filter(|&&b| b).count();
    if n_train == 0 || n_train == records.len() {
        return Err(CorpusError::Split(format!(
            "{} records at fraction {} leaves one side empty",
            records.len(),
            spec.train_fraction
        )));
    }
    let mut train = Vec::with_capacity(n_train);
    let mut test = Vec::with_capacity(records.len() - n_train);
    for (r, t) in records.iter().zip(in_train) {
        if t {
            train.push(r.clone());
        } else {
            test.push(r.clone());
        }
    }
    Ok((train, test))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    #[serde(rename = "true")]
    pub positive: usize,
    #[serde(rename = "false")]
    pub negative: usize,
}

pub fn label_distribution(records: &[EssayRecord]) -> BTreeMap<Trait, LabelCounts> {
    let mut out: BTreeMap<Trait, LabelCounts> = Trait::ALL
        .iter()
        .map(|&t| (t, LabelCounts::default()))
        .collect();
    for r in records {
        for t in Trait::ALL {
            let c = out.get_mut(&t).expect("all traits inserted");
            if r.labels.get(t) {
                c.positive += 1;
            } else {
                c.negative += 1;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIXTURE: &str = "#AUTHID,TEXT,cEXT,cNEU,cAGR,cCON,cOPN\n\
        a1,\"I am happy. It rains, sadly.\",y,n,Y,n,y\n\
        a2,Short text here,n,y,n,Y,N\n";

    #[test]
    fn write_then_read_round_trips() {
        let recs = read_corpus(FIXTURE.as_bytes(), &ColumnMap::default()).unwrap();
        let mut buf = Vec::new();
        write_corpus(&mut buf, &recs, &ColumnMap::default()).unwrap();
        assert_eq!(
            read_corpus(buf.as_slice(), &ColumnMap::default()).unwrap(),
            recs
        );
    }

    #[test]
    fn parses_fixture() {
        let recs = read_corpus(FIXTURE.as_bytes(), &ColumnMap::default()).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].id, "a1");
        assert_eq!(recs[0].text, "I am happy. It rains, sadly.");
        let l = recs[0].labels;
        assert!(l.extraversion && !l.neuroticism && l.agreeableness && !l.conscientiousness);
        assert!(l.openness);
        let l = recs[1].labels;
        assert!(!l.extraversion && l.neuroticism && !l.agreeableness && l.conscientiousness);
        assert!(!l.openness);
    }

    #[test]
    fn missing_text_column_is_schema_error() {
        let cols = ColumnMap {
            text: "BODY".into(),
            ..ColumnMap::default()
        };
        match read_corpus(FIXTURE.as_bytes(), &cols) {
            Err(CorpusError::MissingColumn(c)) => assert_eq!(c, "BODY"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn bad_label_reports_row() {
        let csv = "#AUTHID,TEXT,cEXT,cNEU,cAGR,cCON,cOPN\na,x,y,y,y,y,y\nb,x,y,maybe,y,y,y\n";
        match read_corpus(csv.as_bytes(), &ColumnMap::default()) {
            Err(CorpusError::Row { row, .. }) => assert_eq!(row, 2),
            other => panic!("expected row error, got {other:?}"),
        }
    }

    #[test]
    fn empty_file_is_empty_corpus() {
        assert!(matches!(
            read_corpus("".as_bytes(), &ColumnMap::default()),
            Err(CorpusError::Empty)
        ));
        let header_only = "#AUTHID,TEXT,cEXT,cNEU,cAGR,cCON,cOPN\n";
        assert!(matches!(
            read_corpus(header_only.as_bytes(), &ColumnMap::default()),
            Err(CorpusError::Empty)
        ));
    }

    #[test]
    fn duplicate_id_rejected() {
        let csv = "#AUTHID,TEXT,cEXT,cNEU,cAGR,cCON,cOPN\na,x,y,y,y,y,y\na,z,y,y,y,y,y\n";
        assert!(matches!(
            read_corpus(csv.as_bytes(), &ColumnMap::default()),
            Err(CorpusError::Row { row: 2, .. })
        ));
    }

    #[test]
    fn trait_parsing() {
        assert_eq!("O".parse::<Trait>().unwrap(), Trait::Openness);
        assert_eq!("neuroticism".parse::<Trait>().unwrap(), Trait::Neuroticism);
        assert!("X".parse::<Trait>().is_err());
    }

    fn records(n: usize) -> Vec<EssayRecord> {
        (0..n)
            .map(|i| EssayRecord {
                id: format!("d{i}"),
                text: format!("text {i}"),
                labels: TraitLabels {
                    openness: i % 2 == 0,
                    conscientiousness: i % 3 == 0,
                    ..TraitLabels::default()
                },
            })
            .collect()
    }

    #[test]
    fn split_counts() {
        let spec = SplitSpec {
            train_fraction: 0.8,
            seed: 9,
            stratify: None,
        };
        let (tr, te) = split_train_test(&records(10), &spec).unwrap();
        assert_eq!((tr.len(), te.len()), (8, 2));
    }

    #[test]
    fn split_rejects_empty_side() {
        let spec = SplitSpec {
            train_fraction: 0.9,
            seed: 1,
            stratify: None,
        };
        assert!(matches!(
            split_train_test(&records(2), &spec),
            Err(CorpusError::Split(_))
        ));
        let bad = SplitSpec {
            train_fraction: 1.0,
            ..spec
        };
        assert!(split_train_test(&records(10), &bad).is_err());
    }

    #[test]
    fn seed_changes_membership() {
        let recs = records(100);
        let a = SplitSpec {
            train_fraction: 0.8,
            seed: 1,
            stratify: None,
        };
        let b = SplitSpec {
            seed: 2,
            ..a.clone()
        };
        let (ta, _) = split_train_test(&recs, &a).unwrap();
        let (tb, _) = split_train_test(&recs, &b).unwrap();
        let ids_a: HashSet<_> = ta.iter().map(|r| &r.id).collect();
        let ids_b: HashSet<_> = tb.iter().map(|r| &r.id).collect();
        assert_ne!(ids_a, ids_b);
    }

    #[test]
    fn stratified_split_keeps_class_ratio() {
        let recs = records(100);
        let spec = SplitSpec {
            train_fraction: 0.8,
            seed: 4,
            stratify: Some(Trait::Openness),
        };
        let (tr, te) = split_train_test(&recs, &spec).unwrap();
        assert_eq!(tr.iter().filter(|r| r.labels.openness).count(), 40);
        assert_eq!(te.iter().filter(|r| r.labels.openness).count(), 10);
    }

    #[test]
    fn distribution_hand_count() {
        let recs = records(4);
        let d = label_distribution(&recs);
        // openness true for 0, 2; conscientiousness true for 0, 3
        assert_eq!(
            d[&Trait::Openness],
            LabelCounts {
                positive: 2,
                negative: 2
            }
        );
        assert_eq!(
            d[&Trait::Conscientiousness],
            LabelCounts {
                positive: 2,
                negative: 2
            }
        );
        assert_eq!(
            d[&Trait::Neuroticism],
            LabelCounts {
                positive: 0,
                negative: 4
            }
        );
        let empty = label_distribution(&[]);
        assert!(empty.values().all(|c| c.positive == 0 && c.negative == 0));
    }
}
