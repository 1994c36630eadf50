use std::collections::HashMap;
use std::path::Path;

use super::{DatasetManifest, NutrientVector, Sample};
use crate::{Error, Result, NUM_TASKS};

/// Exact header a manifest must start with.
pub const MANIFEST_HEADER: [&str; 6] = [
    "image_path",
    "calories_kcal",
    "mass_g",
    "protein_g",
    "fat_g",
    "carb_g",
];

/// Parses manifest CSV text. Relative paths are left as written; use
/// [`load_manifest`] to also record the directory they resolve against.
pub fn parse_manifest(text: &str) -> Result<DatasetManifest> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let header = reader
        .headers()
        .map_err(|e| Error::Format(format!("unreadable header: {e}")))?
        .clone();
    check_header(&header)?;

    let mut samples = Vec::new();
    let mut seen: HashMap<String, u64> = HashMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            Error::Row {
                line,
                message: format!("malformed record: {e}"),
            }
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() == 1 && record.get(0) == Some("") {
            // blank line
            continue;
        }
        if record.len() != MANIFEST_HEADER.len() {
            return Err(Error::Row {
                line,
                message: format!(
                    "expected {} fields, found {}",
                    MANIFEST_HEADER.len(),
                    record.len()
                ),
            });
        }
        let image_ref = record[0].to_string();
        if image_ref.is_empty() {
            return Err(Error::Row {
                line,
                message: "empty image_path".to_string(),
            });
        }
        let mut values = [0.0; NUM_TASKS];
        for (k, value) in values.iter_mut().enumerate() {
            let field = &record[k + 1];
            let column = MANIFEST_HEADER[k + 1];
            let v: f64 = field.parse().map_err(|_| Error::Row {
                line,
                message: format!("non-numeric nutrient `{field}` in column {column}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Row {
                    line,
                    message: format!("non-finite nutrient in column {column}"),
                });
            }
            if v < 0.0 {
                return Err(Error::Row {
                    line,
                    message: "negative nutrient".to_string(),
                });
            }
            *value = v;
        }
        if seen.insert(image_ref.clone(), line).is_some() {
            return Err(Error::Duplicate {
                line,
                path: image_ref,
            });
        }
        samples.push(Sample {
            image_ref,
            label: NutrientVector::from_array_unchecked(values),
        });
    }
    Ok(DatasetManifest::new(samples))
}

fn check_header(header: &csv::StringRecord) -> Result<()> {
    let got: Vec<&str> = header.iter().collect();
    if got.len() == 1 && got[0].is_empty() {
        return Err(Error::Format("missing header row".to_string()));
    }
    for (i, expected) in MANIFEST_HEADER.iter().enumerate() {
        let found = got.get(i).copied();
        if found == Some(*expected) {
            continue;
        }
        if !got.contains(expected) {
            return Err(Error::Format(format!("missing column `{expected}`")));
        }
        return Err(match found {
            Some(name) if !MANIFEST_HEADER.contains(&name) => {
                Error::Format(format!("unexpected column `{name}`"))
            }
            _ => Error::Format(format!("column `{expected}` out of order")),
        });
    }
    if let Some(extra) = got.get(MANIFEST_HEADER.len()) {
        return Err(Error::Format(format!("unexpected column `{extra}`")));
    }
    Ok(())
}

/// Reads a manifest file; relative image paths resolve against its directory.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(parse_manifest(&text)?.with_root(root))
}

/// Renders samples back to manifest CSV. Values use the shortest
/// representation that parses back to the same `f64`.
pub fn render_manifest(manifest: &DatasetManifest) -> String {
    let mut writer = csv::WriterBuilder::new().from_writer(Vec::new());
    writer
        .write_record(MANIFEST_HEADER)
        .expect("writing to memory");
    for s in &manifest.samples {
        let v = s.label.to_array();
        let mut row = vec![s.image_ref.clone()];
        row.extend(v.iter().map(|x| format!("{x}")));
        writer.write_record(&row).expect("writing to memory");
    }
    String::from_utf8(writer.into_inner().expect("flush to memory")).expect("utf-8 csv")
}
