use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{read_to_string, Domain, Loaded, Origin, Polarity, RawInstance, Span, Task};
use crate::advgen::Strategy;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AspectRecord {
    pub start: usize,
    pub end: usize,
    pub text: String,
}

/// One line of the canonical JSONL interchange format. Adversarial sets add
/// `strategy` and `parent_id`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JsonRecord {
    pub id: String,
    pub words: Vec<String>,
    pub aspect: AspectRecord,
    pub polarity: Option<Polarity>,
    pub opinions: Option<Vec<Span>>,
    pub domain: Domain,
    pub origin: Origin,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<Strategy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_id: Option<String>,
}

impl From<&RawInstance> for JsonRecord {
    fn from(inst: &RawInstance) -> Self {
        JsonRecord {
            id: inst.id.clone(),
            words: inst.words.clone(),
            aspect: AspectRecord {
                start: inst.aspect.start,
                end: inst.aspect.end,
                text: inst.aspect_text.clone(),
            },
            polarity: inst.polarity,
            opinions: inst.opinions.clone(),
            domain: inst.domain,
            origin: inst.origin,
            strategy: None,
            parent_id: None,
        }
    }
}

impl JsonRecord {
    pub fn into_instance(self) -> RawInstance {
        RawInstance {
            id: self.id,
            words: self.words,
            aspect: Span::new(self.aspect.start, self.aspect.end),
            aspect_text: self.aspect.text,
            polarity: self.polarity,
            opinions: self.opinions,
            domain: self.domain,
            origin: self.origin,
        }
    }
}

pub(crate) fn parse_records(text: &str) -> Result<Vec<(usize, JsonRecord)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: JsonRecord = serde_json::from_str(line)
            .map_err(|e| Error::format(format!("line {}", i + 1), e.to_string()))?;
        out.push((i + 1, rec));
    }
    Ok(out)
}

/// Parses canonical JSONL. Any record violating the schema invariants is a
/// format error.
pub fn from_jsonl_str(text: &str) -> Result<Vec<RawInstance>> {
    parse_records(text)?
        .into_iter()
        .map(|(line, rec)| {
            let inst = rec.into_instance();
            inst.validate()
                .map_err(|r| Error::format(format!("line {line}"), r.to_string()))?;
            Ok(inst)
        })
        .collect()
}

pub(crate) fn load_jsonl_str(text: &str, task: Task) -> Result<Loaded> {
    let mut loaded = Loaded::default();
    for (_, rec) in parse_records(text)? {
        loaded.admit(rec.into_instance(), task);
    }
    Ok(loaded)
}

pub fn to_jsonl_string(instances: &[RawInstance]) -> String {
    let mut out = String::new();
    for inst in instances {
        out.push_str(&serde_json::to_string(&JsonRecord::from(inst)).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn read_jsonl(path: &Path) -> Result<Vec<RawInstance>> {
    from_jsonl_str(&read_to_string(path)?)
}

pub fn write_jsonl(path: &Path, instances: &[RawInstance]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(to_jsonl_string(instances).as_bytes())
        .map_err(|e| Error::io(path, e))
}
