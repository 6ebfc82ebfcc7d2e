//! The four cohort CSV files, JSON artifacts and the config-hash stamp that
//! every written file carries.
//!
//! CSV files start with a `# config_hash=<hex>` line; the reader drops that
//! one line, so stamped files read back like plain ones.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use score_audit_core::records::{AssessmentRow, ChargeRow, EventRow, PersonRow, RawCohort};

pub const PERSONS: &str = "persons.csv";
pub const CHARGES: &str = "charges.csv";
pub const EVENTS: &str = "events.csv";
pub const ASSESSMENTS: &str = "assessments.csv";
pub const COHORT_FILES: [&str; 4] = [PERSONS, CHARGES, EVENTS, ASSESSMENTS];

/// A required input that is absent. The CLI maps it to exit code 2.
#[derive(Debug)]
pub struct MissingArtifact(pub PathBuf);

impl std::fmt::Display for MissingArtifact {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "missing upstream artifact: {}", self.0.display())
    }
}

impl std::error::Error for MissingArtifact {}

pub fn require_file(path: &Path) -> Result<()> {
    if !path.is_file() {
        return Err(MissingArtifact(path.to_path_buf()).into());
    }
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Digest over the named files' names and contents, in the given order.
pub fn digest_files(dir: &Path, names: &[&str]) -> Result<String> {
    let mut h = Sha256::new();
    for name in names {
        let bytes = fs::read(dir.join(name)).with_context(|| format!("reading {}", dir.join(name).display()))?;
        h.update(name.as_bytes());
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

const STAMP: &[u8] = b"# config_hash=";

/// The CSV body after a leading hash stamp line, and the lines dropped.
fn strip_stamp(bytes: &[u8]) -> (&[u8], u64) {
    if !bytes.starts_with(STAMP) {
        return (bytes, 0);
    }
    match bytes.iter().position(|&b| b == b'\n') {
        Some(i) => (&bytes[i + 1..], 1),
        None => (&[], 1),
    }
}

struct Table {
    file: String,
    rows: Vec<(u64, csv::StringRecord)>,
    index: HashMap<String, usize>,
}

impl Table {
    fn read(dir: &Path, name: &str, required: &[&str]) -> Result<Self> {
        let path = dir.join(name);
        require_file(&path)?;
        let bytes = fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
        let (body, skipped) = strip_stamp(&bytes);
        let mut rdr = csv::Reader::from_reader(body);
        let headers = rdr.headers().with_context(|| format!("{name}: reading header"))?.clone();
        let index: HashMap<String, usize> =
            headers.iter().enumerate().map(|(i, h)| (h.trim().to_string(), i)).collect();
        for col in required {
            if !index.contains_key(*col) {
                bail!("{name}: missing column {col:?}");
            }
        }
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| anyhow!("{name}: {e}"))?;
            let line = rec.position().map_or(0, |p| p.line()) + skipped;
            rows.push((line, rec));
        }
        Ok(Self {
            file: name.to_string(),
            rows,
            index,
        })
    }

    fn get(&self, rec: &csv::StringRecord, line: u64, col: &str) -> Result<String> {
        let i = self.index[col];
        rec.get(i)
            .map(str::to_string)
            .ok_or_else(|| anyhow!("{}:{line}: missing field {col:?}", self.file))
    }

    fn optional(&self, rec: &csv::StringRecord, col: &str) -> Option<String> {
        self.index.get(col).and_then(|&i| rec.get(i)).map(str::to_string)
    }
}

/// Reads the four cohort files from `dir`. Columns are matched by header
/// name; `jail30` and `prison` in assessments.csv are optional.
pub fn read_cohort(dir: &Path) -> Result<RawCohort> {
    let mut raw = RawCohort::default();

    let t = Table::read(dir, PERSONS, &["person_id", "dob", "sex", "race"])?;
    for (line, r) in &t.rows {
        raw.persons.push(PersonRow {
            line: *line,
            person_id: t.get(r, *line, "person_id")?,
            dob: t.get(r, *line, "dob")?,
            sex: t.get(r, *line, "sex")?,
            race: t.get(r, *line, "race")?,
        });
    }

    let t = Table::read(dir, CHARGES, &["person_id", "charge_date", "statute", "degree", "description"])?;
    for (line, r) in &t.rows {
        raw.charges.push(ChargeRow {
            line: *line,
            person_id: t.get(r, *line, "person_id")?,
            charge_date: t.get(r, *line, "charge_date")?,
            statute: t.get(r, *line, "statute")?,
            degree: t.get(r, *line, "degree")?,
            description: t.get(r, *line, "description")?,
        });
    }

    let t = Table::read(dir, EVENTS, &["person_id", "event_date", "description"])?;
    for (line, r) in &t.rows {
        raw.events.push(EventRow {
            line: *line,
            person_id: t.get(r, *line, "person_id")?,
            event_date: t.get(r, *line, "event_date")?,
            description: t.get(r, *line, "description")?,
        });
    }

    let cols = [
        "assessment_id",
        "person_id",
        "screening_date",
        "score_kind",
        "raw_score",
        "decile_score",
        "stage",
    ];
    let t = Table::read(dir, ASSESSMENTS, &cols)?;
    for (line, r) in &t.rows {
        raw.assessments.push(AssessmentRow {
            line: *line,
            assessment_id: t.get(r, *line, "assessment_id")?,
            person_id: t.get(r, *line, "person_id")?,
            screening_date: t.get(r, *line, "screening_date")?,
            score_kind: t.get(r, *line, "score_kind")?,
            raw_score: t.get(r, *line, "raw_score")?,
            decile_score: t.get(r, *line, "decile_score")?,
            stage: t.get(r, *line, "stage")?,
            jail30: t.optional(r, "jail30"),
            prison: t.optional(r, "prison"),
        });
    }
    Ok(raw)
}

/// CSV writer that stamps the config hash on the first line.
pub struct CsvOut {
    path: PathBuf,
    inner: csv::Writer<Vec<u8>>,
}

impl CsvOut {
    pub fn new(path: PathBuf, hash: &str, header: &[&str]) -> Result<Self> {
        let mut buf = Vec::new();
        buf.extend_from_slice(STAMP);
        writeln!(buf, "{hash}")?;
        let mut inner = csv::Writer::from_writer(buf);
        inner.write_record(header)?;
        Ok(Self { path, inner })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.inner.write_record(fields)?;
        Ok(())
    }

    pub fn finish(self) -> Result<()> {
        let bytes = self.inner.into_inner().map_err(|e| anyhow!("{e}"))?;
        write_bytes(&self.path, &bytes)
    }
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

/// Writes the four cohort files in the input schema. The two optional
/// assessment columns are written when any row carries them.
pub fn write_cohort(dir: &Path, raw: &RawCohort, hash: &str) -> Result<()> {
    let mut w = CsvOut::new(dir.join(PERSONS), hash, &["person_id", "dob", "sex", "race"])?;
    for p in &raw.persons {
        w.row([&p.person_id, &p.dob, &p.sex, &p.race])?;
    }
    w.finish()?;

    let mut w = CsvOut::new(
        dir.join(CHARGES),
        hash,
        &["person_id", "charge_date", "statute", "degree", "description"],
    )?;
    for c in &raw.charges {
        w.row([&c.person_id, &c.charge_date, &c.statute, &c.degree, &c.description])?;
    }
    w.finish()?;

    let mut w = CsvOut::new(dir.join(EVENTS), hash, &["person_id", "event_date", "description"])?;
    for e in &raw.events {
        w.row([&e.person_id, &e.event_date, &e.description])?;
    }
    w.finish()?;

    let counts = raw.assessments.iter().any(|a| a.jail30.is_some() || a.prison.is_some());
    let mut header = vec![
        "assessment_id",
        "person_id",
        "screening_date",
        "score_kind",
        "raw_score",
        "decile_score",
        "stage",
    ];
    if counts {
        header.extend(["jail30", "prison"]);
    }
    let mut w = CsvOut::new(dir.join(ASSESSMENTS), hash, &header)?;
    for a in &raw.assessments {
        let mut f = vec![
            a.assessment_id.clone(),
            a.person_id.clone(),
            a.screening_date.clone(),
            a.score_kind.clone(),
            a.raw_score.clone(),
            a.decile_score.clone(),
            a.stage.clone(),
        ];
        if counts {
            f.push(a.jail30.clone().unwrap_or_default());
            f.push(a.prison.clone().unwrap_or_default());
        }
        w.row(f)?;
    }
    w.finish()
}

/// Pretty JSON with a top-level `config_hash`. Objects get the key merged in;
/// anything else is wrapped as `{config_hash, data}`.
pub fn write_json<T: Serialize>(path: &Path, hash: &str, value: &T) -> Result<()> {
    let v = serde_json::to_value(value)?;
    let out = match v {
        serde_json::Value::Object(mut m) => {
            m.insert("config_hash".into(), hash.into());
            serde_json::Value::Object(m)
        }
        other => serde_json::json!({ "config_hash": hash, "data": other }),
    };
    let mut bytes = serde_json::to_vec_pretty(&out)?;
    bytes.push(b'\n');
    write_bytes(path, &bytes)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    require_file(path)?;
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", path.display()))
}

/// Reads a value written by [`write_json`] in wrapped form.
pub fn read_json_data<T: DeserializeOwned>(path: &Path) -> Result<T> {
    #[derive(serde::Deserialize)]
    struct Wrapped<T> {
        data: T,
    }
    Ok(read_json::<Wrapped<T>>(path)?.data)
}

/// Shortest representation that parses back to the same value.
pub fn num(x: f64) -> String {
    format!("{x}")
}

pub fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}
