use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAX_AGE_YEARS: f64 = 100.0;
pub const MAX_SURVIVAL_DAYS: f64 = 1750.0;

#[derive(Clone, Debug, PartialEq)]
pub struct ClinicalRecord {
    age_years: f64,
    survival_days: Option<f64>,
}

impl ClinicalRecord {
    pub fn new(age_years: f64, survival_days: Option<f64>) -> Result<Self> {
        if !(0.0..=MAX_AGE_YEARS).contains(&age_years) {
            return Err(Error::InvalidParameter(format!("age {age_years} outside [0, {MAX_AGE_YEARS}]")));
        }
        if let Some(s) = survival_days {
            if !(0.0..=MAX_SURVIVAL_DAYS).contains(&s) {
                return Err(Error::InvalidParameter(format!("survival {s} outside [0, {MAX_SURVIVAL_DAYS}]")));
            }
        }
        Ok(ClinicalRecord { age_years, survival_days })
    }

    pub fn age_years(&self) -> f64 {
        self.age_years
    }

    pub fn survival_days(&self) -> Option<f64> {
        self.survival_days
    }
}

/// Reads `id,age_years,survival_days`; the survival field may be empty.
pub fn read_clinical_csv(path: impl AsRef<Path>) -> Result<BTreeMap<String, ClinicalRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let headers = rdr.headers()?.clone();
    let want = ["id", "age_years", "survival_days"];
    if headers.iter().collect::<Vec<_>>() != want {
        return Err(Error::Parse(format!("clinical header must be {}, got {:?}", want.join(","), headers)));
    }
    let mut out = BTreeMap::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| Error::Parse(format!("clinical row {}: bad {what}", line + 2));
        let id = rec[0].to_owned();
        let age: f64 = rec[1].parse().map_err(|_| bad("age_years"))?;
        let surv = match &rec[2] {
            "" => None,
            s => Some(s.parse::<f64>().map_err(|_| bad("survival_days"))?),
        };
        if out.insert(id.clone(), ClinicalRecord::new(age, surv)?).is_some() {
            return Err(Error::Parse(format!("duplicate clinical id {id}")));
        }
    }
    Ok(out)
}

pub fn write_clinical_csv<'a>(
    path: impl AsRef<Path>,
    records: impl IntoIterator<Item = (&'a str, &'a ClinicalRecord)>,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["id", "age_years", "survival_days"])?;
    for (id, r) in records {
        let s = r.survival_days.map(|s| s.to_string()).unwrap_or_default();
        w.write_record([id, &r.age_years.to_string(), &s])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounds() {
        assert!(ClinicalRecord::new(101.0, None).is_err());
        assert!(ClinicalRecord::new(-1.0, None).is_err());
        assert!(ClinicalRecord::new(50.0, Some(1751.0)).is_err());
        assert!(ClinicalRecord::new(0.0, Some(1750.0)).is_ok());
    }

    #[test]
    fn csv_round_trip_with_empty_survival() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.csv");
        std::fs::write(&p, "id,age_years,survival_days\na,61.5,400\nb,40,\n").unwrap();
        let m = read_clinical_csv(&p).unwrap();
        assert_eq!(m["a"].survival_days(), Some(400.0));
        assert_eq!(m["b"].survival_days(), None);
        let q = dir.path().join("d.csv");
        write_clinical_csv(&q, m.iter().map(|(k, v)| (k.as_str(), v))).unwrap();
        assert_eq!(read_clinical_csv(&q).unwrap(), m);
    }
}
