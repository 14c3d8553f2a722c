use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use super::{read_volume, write_volume, ClinicalRecord, Volume, VolumeKind};
use crate::error::{Error, Result};

/// MR sequence. The discriminant is the input channel index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Modality {
    T1,
    T1ce,
    T2,
    Flair,
}

impl Modality {
    pub const ALL: [Modality; 4] = [Modality::T1, Modality::T1ce, Modality::T2, Modality::Flair];

    /// File-name suffix used in case directories.
    pub fn suffix(self) -> &'static str {
        match self {
            Modality::T1 => "t1",
            Modality::T1ce => "t1ce",
            Modality::T2 => "t2",
            Modality::Flair => "flair",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Modality::T1 => "T1",
            Modality::T1ce => "T1ce",
            Modality::T2 => "T2",
            Modality::Flair => "FLAIR",
        })
    }
}

/// Four co-registered modalities of one patient, with optional ground truth
/// and clinical data.
#[derive(Clone, Debug, PartialEq)]
pub struct PatientCase {
    id: String,
    modalities: [Volume; 4],
    truth: Option<Volume>,
    clinical: Option<ClinicalRecord>,
}

impl PatientCase {
    pub fn new(
        id: impl Into<String>,
        modalities: [Volume; 4],
        truth: Option<Volume>,
        clinical: Option<ClinicalRecord>,
    ) -> Result<Self> {
        let case = PatientCase { id: id.into(), modalities, truth, clinical };
        case.validate()?;
        Ok(case)
    }

    fn validate(&self) -> Result<()> {
        let first = &self.modalities[0];
        for (m, v) in Modality::ALL.iter().zip(&self.modalities) {
            if v.kind() != VolumeKind::Intensity {
                return Err(Error::InvalidParameter(format!("{}: {m} is not an intensity volume", self.id)));
            }
            first.require_same_geometry(v, &format!("{}: {m}", self.id))?;
        }
        if let Some(t) = &self.truth {
            if t.kind() != VolumeKind::Label {
                return Err(Error::InvalidParameter(format!("{}: truth is not a label volume", self.id)));
            }
            first.require_same_geometry(t, &format!("{}: truth", self.id))?;
        }
        Ok(())
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn modalities(&self) -> &[Volume; 4] {
        &self.modalities
    }

    pub fn modality(&self, m: Modality) -> &Volume {
        &self.modalities[m as usize]
    }

    pub fn truth(&self) -> Option<&Volume> {
        self.truth.as_ref()
    }

    pub fn clinical(&self) -> Option<&ClinicalRecord> {
        self.clinical.as_ref()
    }

    pub fn dims(&self) -> [usize; 3] {
        self.modalities[0].dims()
    }

    pub fn spacing(&self) -> [f32; 3] {
        self.modalities[0].spacing()
    }

    /// The same case with replaced modality volumes (e.g. after preprocessing).
    pub fn with_modalities(&self, modalities: [Volume; 4]) -> Result<Self> {
        PatientCase::new(self.id.clone(), modalities, self.truth.clone(), self.clinical.clone())
    }

    pub fn with_clinical(mut self, clinical: Option<ClinicalRecord>) -> Self {
        self.clinical = clinical;
        self
    }

    pub fn without_truth(mut self) -> Self {
        self.truth = None;
        self
    }
}

fn case_id(dir: &Path) -> Result<String> {
    dir.file_name()
        .and_then(|n| n.to_str())
        .map(str::to_owned)
        .ok_or_else(|| Error::InvalidParameter(format!("cannot derive a case id from {}", dir.display())))
}

/// Loads `<dir>/<id>_{t1,t1ce,t2,flair}.nii` and, if present, `<id>_seg.nii`.
/// The case id is the directory name.
pub fn load_patient_case(dir: impl AsRef<Path>, clinical: Option<ClinicalRecord>) -> Result<PatientCase> {
    let dir = dir.as_ref();
    let id = case_id(dir)?;
    let mut vols = Vec::with_capacity(4);
    for m in Modality::ALL {
        let p = dir.join(format!("{id}_{}.nii", m.suffix()));
        if !p.is_file() {
            return Err(Error::MissingModality { case: id, modality: m.to_string() });
        }
        vols.push(read_volume(&p, VolumeKind::Intensity)?);
    }
    let seg = dir.join(format!("{id}_seg.nii"));
    let truth = if seg.is_file() { Some(read_volume(&seg, VolumeKind::Label)?) } else { None };
    let modalities: [Volume; 4] = vols.try_into().expect("four modalities");
    PatientCase::new(id, modalities, truth, clinical)
}

/// Writes a case in the directory layout read by [`load_patient_case`].
/// `dir` is the parent; the case goes into `dir/<id>/`.
pub fn write_patient_case(case: &PatientCase, dir: impl AsRef<Path>) -> Result<std::path::PathBuf> {
    let out = dir.as_ref().join(case.id());
    std::fs::create_dir_all(&out)?;
    for m in Modality::ALL {
        write_volume(case.modality(m), out.join(format!("{}_{}.nii", case.id(), m.suffix())))?;
    }
    if let Some(t) = case.truth() {
        write_volume(t, out.join(format!("{}_seg.nii", case.id())))?;
    }
    Ok(out)
}

/// Loads every case directory under `root`, sorted by id. Clinical records
/// are attached by id when given.
pub fn load_cases(root: impl AsRef<Path>, clinical: Option<&BTreeMap<String, ClinicalRecord>>) -> Result<Vec<PatientCase>> {
    let mut dirs = Vec::new();
    for entry in std::fs::read_dir(root.as_ref())? {
        let p = entry?.path();
        if p.is_dir() {
            dirs.push(p);
        }
    }
    dirs.sort();
    let mut cases = Vec::with_capacity(dirs.len());
    for d in dirs {
        let id = case_id(&d)?;
        let rec = clinical.and_then(|c| c.get(&id).cloned());
        cases.push(load_patient_case(&d, rec)?);
    }
    cases.sort_by(|a, b| a.id().cmp(b.id()));
    if cases.is_empty() {
        return Err(Error::EmptyInput(format!("no case directories under {}", root.as_ref().display())));
    }
    Ok(cases)
}
