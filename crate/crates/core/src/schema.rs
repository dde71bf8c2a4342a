//! Tabular flow data model: feature kinds, dataset schemas and class labels.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{EfcError, Result};

/// Text of the synthetic open-set label.
pub const SUSPICIOUS: &str = "suspicious";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Continuous,
    Symbolic,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureDescriptor {
    pub name: String,
    pub kind: FeatureKind,
    /// Index among the retained feature columns (0-based).
    pub position: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSchema {
    pub features: Vec<FeatureDescriptor>,
    pub label_column: String,
    #[serde(default)]
    pub dropped_columns: Vec<String>,
}

/// On-disk sidecar layout. Positions are implied by list order.
#[derive(Debug, Serialize, Deserialize)]
struct SchemaSidecar {
    label_column: String,
    #[serde(default)]
    dropped_columns: Vec<String>,
    features: Vec<SidecarFeature>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SidecarFeature {
    name: String,
    kind: FeatureKind,
}

impl DatasetSchema {
    pub fn new(
        features: impl IntoIterator<Item = (String, FeatureKind)>,
        label_column: impl Into<String>,
        dropped_columns: Vec<String>,
    ) -> Result<Self> {
        let features = features
            .into_iter()
            .enumerate()
            .map(|(position, (name, kind))| FeatureDescriptor {
                name: name.trim().to_string(),
                kind,
                position,
            })
            .collect();
        let schema = DatasetSchema {
            features,
            label_column: label_column.into().trim().to_string(),
            dropped_columns: dropped_columns
                .into_iter()
                .map(|c| c.trim().to_string())
                .collect(),
        };
        schema.validate()?;
        Ok(schema)
    }

    /// Every retained column continuous, named `f1..fm`, label column `label`.
    pub fn all_continuous(m: usize) -> Result<Self> {
        Self::new(
            (1..=m).map(|i| (format!("f{i}"), FeatureKind::Continuous)),
            "label",
            Vec::new(),
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.len() < 2 {
            return Err(EfcError::Schema(format!(
                "at least two features are required, got {}",
                self.features.len()
            )));
        }
        let mut names = HashSet::new();
        for (idx, f) in self.features.iter().enumerate() {
            if f.position != idx {
                return Err(EfcError::Schema(format!(
                    "feature `{}` has position {} but is listed at {}",
                    f.name, f.position, idx
                )));
            }
            if !names.insert(f.name.as_str()) {
                return Err(EfcError::Schema(format!("duplicate feature `{}`", f.name)));
            }
        }
        if names.contains(self.label_column.as_str()) {
            return Err(EfcError::Schema(format!(
                "label column `{}` is also listed as a feature",
                self.label_column
            )));
        }
        for d in &self.dropped_columns {
            if names.contains(d.as_str()) || *d == self.label_column {
                return Err(EfcError::Schema(format!(
                    "dropped column `{d}` is also a feature or the label"
                )));
            }
        }
        Ok(())
    }

    pub fn m(&self) -> usize {
        self.features.len()
    }

    pub fn kinds(&self) -> Vec<FeatureKind> {
        self.features.iter().map(|f| f.kind).collect()
    }

    /// Reads a TOML sidecar:
    ///
    /// ```toml
    /// label_column = "Label"
    /// dropped_columns = ["Flow ID"]
    /// [[features]]
    /// name = "Protocol"
    /// kind = "symbolic"
    /// ```
    pub fn from_sidecar(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| EfcError::io(path, e))?;
        Self::from_sidecar_str(&text)
            .map_err(|e| EfcError::Schema(format!("{}: {e}", path.display())))
    }

    pub fn to_sidecar_string(&self) -> String {
        let raw = SchemaSidecar {
            label_column: self.label_column.clone(),
            dropped_columns: self.dropped_columns.clone(),
            features: self
                .features
                .iter()
                .map(|f| SidecarFeature {
                    name: f.name.clone(),
                    kind: f.kind,
                })
                .collect(),
        };
        toml::to_string(&raw).expect("sidecar fields are plain strings")
    }

    pub fn from_sidecar_str(text: &str) -> Result<Self> {
        let raw: SchemaSidecar =
            toml::from_str(text).map_err(|e| EfcError::Schema(e.to_string()))?;
        Self::new(
            raw.features.into_iter().map(|f| (f.name, f.kind)),
            raw.label_column,
            raw.dropped_columns,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetProfile {
    Cidds001,
    Cicids2017,
}

impl DatasetProfile {
    pub const ALL: [DatasetProfile; 2] = [DatasetProfile::Cidds001, DatasetProfile::Cicids2017];

    pub fn id(self) -> &'static str {
        match self {
            DatasetProfile::Cidds001 => "cidds001",
            DatasetProfile::Cicids2017 => "cicids2017",
        }
    }

    pub fn parse(id: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.id() == id.trim())
            .ok_or_else(|| EfcError::UnknownProfile {
                id: id.to_string(),
                known: Self::ALL.iter().map(|p| p.id().to_string()).collect(),
            })
    }
}

impl fmt::Display for DatasetProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

// NetFlow export columns of the simulated OpenStack traffic. `attackType`
// carries the multi-class label ("---" for normal traffic).
const CIDDS_FEATURES: [(&str, FeatureKind); 8] = [
    ("Duration", FeatureKind::Continuous),
    ("Proto", FeatureKind::Symbolic),
    ("Src Pt", FeatureKind::Continuous),
    ("Dst Pt", FeatureKind::Continuous),
    ("Packets", FeatureKind::Continuous),
    ("Bytes", FeatureKind::Continuous),
    ("Flows", FeatureKind::Continuous),
    ("Flags", FeatureKind::Symbolic),
];
const CIDDS_DROPPED: [&str; 7] = [
    "Date first seen",
    "Src IP Addr",
    "Dst IP Addr",
    "Tos",
    "class",
    "attackID",
    "attackDescription",
];

// CICFlowMeter columns of the labelled-flows CSVs, identifiers excluded.
const CICIDS_FEATURES: [&str; 80] = [
    "Source Port",
    "Destination Port",
    "Protocol",
    "Flow Duration",
    "Total Fwd Packets",
    "Total Backward Packets",
    "Total Length of Fwd Packets",
    "Total Length of Bwd Packets",
    "Fwd Packet Length Max",
    "Fwd Packet Length Min",
    "Fwd Packet Length Mean",
    "Fwd Packet Length Std",
    "Bwd Packet Length Max",
    "Bwd Packet Length Min",
    "Bwd Packet Length Mean",
    "Bwd Packet Length Std",
    "Flow Bytes/s",
    "Flow Packets/s",
    "Flow IAT Mean",
    "Flow IAT Std",
    "Flow IAT Max",
    "Flow IAT Min",
    "Fwd IAT Total",
    "Fwd IAT Mean",
    "Fwd IAT Std",
    "Fwd IAT Max",
    "Fwd IAT Min",
    "Bwd IAT Total",
    "Bwd IAT Mean",
    "Bwd IAT Std",
    "Bwd IAT Max",
    "Bwd IAT Min",
    "Fwd PSH Flags",
    "Bwd PSH Flags",
    "Fwd URG Flags",
    "Bwd URG Flags",
    "Fwd Header Length",
    "Bwd Header Length",
    "Fwd Packets/s",
    "Bwd Packets/s",
    "Min Packet Length",
    "Max Packet Length",
    "Packet Length Mean",
    "Packet Length Std",
    "Packet Length Variance",
    "FIN Flag Count",
    "SYN Flag Count",
    "RST Flag Count",
    "PSH Flag Count",
    "ACK Flag Count",
    "URG Flag Count",
    "CWE Flag Count",
    "ECE Flag Count",
    "Down/Up Ratio",
    "Average Packet Size",
    "Avg Fwd Segment Size",
    "Avg Bwd Segment Size",
    "Fwd Header Length.1",
    "Fwd Avg Bytes/Bulk",
    "Fwd Avg Packets/Bulk",
    "Fwd Avg Bulk Rate",
    "Bwd Avg Bytes/Bulk",
    "Bwd Avg Packets/Bulk",
    "Bwd Avg Bulk Rate",
    "Subflow Fwd Packets",
    "Subflow Fwd Bytes",
    "Subflow Bwd Packets",
    "Subflow Bwd Bytes",
    "Init_Win_bytes_forward",
    "Init_Win_bytes_backward",
    "act_data_pkt_fwd",
    "min_seg_size_forward",
    "Active Mean",
    "Active Std",
    "Active Max",
    "Active Min",
    "Idle Mean",
    "Idle Std",
    "Idle Max",
    "Idle Min",
];
const CICIDS_DROPPED: [&str; 4] = ["Flow ID", "Source IP", "Destination IP", "Timestamp"];

/// Labels merged into one `Web Attack` class for CICIDS2017.
pub const CICIDS_WEB_ATTACKS: [&str; 3] = [
    "Web Attack - Brute Force",
    "Web Attack - XSS",
    "Web Attack - Sql Injection",
];

pub fn builtin_schema(profile: DatasetProfile) -> DatasetSchema {
    let owned = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    let schema = match profile {
        DatasetProfile::Cidds001 => DatasetSchema::new(
            CIDDS_FEATURES.iter().map(|(n, k)| (n.to_string(), *k)),
            "attackType",
            owned(&CIDDS_DROPPED),
        ),
        DatasetProfile::Cicids2017 => DatasetSchema::new(
            CICIDS_FEATURES
                .iter()
                .map(|n| (n.to_string(), FeatureKind::Continuous)),
            "Label",
            owned(&CICIDS_DROPPED),
        ),
    };
    schema.expect("builtin schemas are valid")
}

/// Resolves a profile id such as `cidds001`.
pub fn builtin_schema_by_id(id: &str) -> Result<DatasetSchema> {
    DatasetProfile::parse(id).map(builtin_schema)
}

/// A class label; the suspicious label is synthetic and never trained on.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ClassLabel {
    pub value: String,
    pub is_suspicious: bool,
}

impl ClassLabel {
    pub fn known(value: impl AsRef<str>) -> Self {
        ClassLabel {
            value: value.as_ref().trim().to_string(),
            is_suspicious: false,
        }
    }

    pub fn suspicious() -> Self {
        ClassLabel {
            value: SUSPICIOUS.to_string(),
            is_suspicious: true,
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.value)
    }
}
