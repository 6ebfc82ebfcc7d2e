use anyhow::Result;

use score_audit_core::profile::ProfileRow;
use score_audit_core::subscales::ViolenceHistory;

use super::{write_config, Ctx, FEATURES_DIR};
use crate::io::CsvOut;

const CRIMINAL: [&str; 4] = ["n_arrests", "n_jail30", "n_prison", "n_probation_sentences"];
const NONCOMPLIANCE: [&str; 3] = ["on_probation_at_offense", "n_charges_on_probation", "n_probation_violations"];

pub fn header() -> Vec<&'static str> {
    let mut h = vec![
        "assessment_id",
        "person_id",
        "score_kind",
        "raw_score",
        "decile_score",
        "age",
        "age_first",
        "sex",
        "race",
        "computable",
    ];
    h.extend(CRIMINAL);
    h.extend(ViolenceHistory::NAMES);
    h.extend(NONCOMPLIANCE);
    h.extend([
        "criminal_involvement_sum",
        "violence_history_sum",
        "noncompliance_sum",
        "current_n_charges",
        "current_felony",
        "current_violent",
        "recid_general",
        "recid_violent",
        "recid_observable",
    ]);
    h
}

/// One CSV row; subscale and current-offense fields are empty when the row
/// is not computable.
pub fn fields(r: &ProfileRow) -> Vec<String> {
    let b = |x: bool| (x as u8).to_string();
    let mut f = vec![
        r.assessment_id.clone(),
        r.person_id.clone(),
        r.score_kind.as_str().to_string(),
        format!("{}", r.raw_score),
        r.decile_score.to_string(),
        r.age.to_string(),
        r.age_first.map(|a| a.to_string()).unwrap_or_default(),
        r.sex.as_str().to_string(),
        r.race.as_str().to_string(),
        b(r.computable()),
    ];
    match (&r.subscales, &r.sums) {
        (Some(v), Some(s)) => {
            let c = &v.criminal_involvement;
            let n = &v.noncompliance;
            f.extend([c.n_arrests, c.n_jail30, c.n_prison, c.n_probation_sentences].map(|x| x.to_string()));
            f.extend(v.violence_history.to_array().map(|x| x.to_string()));
            f.extend([n.on_probation_at_offense, n.n_charges_on_probation, n.n_probation_violations].map(|x| x.to_string()));
            f.extend([s.criminal_involvement_sum, s.violence_history_sum, s.noncompliance_sum].map(|x| x.to_string()));
        }
        _ => f.extend(std::iter::repeat_n(String::new(), 4 + 8 + 3 + 3)),
    }
    match &r.current {
        Some(c) => f.extend([c.n_charges.to_string(), b(c.felony), b(c.violent)]),
        None => f.extend(std::iter::repeat_n(String::new(), 3)),
    }
    f.extend([b(r.recidivism.general), b(r.recidivism.violent), b(r.recidivism.observable)]);
    f
}

pub fn run(ctx: &Ctx) -> Result<()> {
    let l = ctx.load()?;
    let dir = ctx.dir(FEATURES_DIR);
    let hash = write_config(&dir, &ctx.config("features", Some(l.digest)))?;
    let mut w = CsvOut::new(dir.join("profiles.csv"), &hash, &header())?;
    for r in &l.rows {
        w.row(fields(r))?;
    }
    w.finish()?;
    let computable = l.rows.iter().filter(|r| r.computable()).count();
    println!(
        "{} assessments, {computable} with a current offense, written to {}",
        l.rows.len(),
        dir.display()
    );
    Ok(())
}
