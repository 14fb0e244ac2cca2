use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use cfkit::regions::fmt6;
use cfkit::IntMatrix;
use serde_json::Value;

pub fn write(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).with_context(|| format!("cannot write {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(path)
}

/// Rounds every float in a JSON tree to six decimals.
pub fn round6(v: &mut Value) {
    match v {
        Value::Number(n) if !(n.is_i64() || n.is_u64()) => {
            if let Some(x) = n.as_f64() {
                let r = (x * 1e6).round() / 1e6;
                let r = if r == 0.0 { 0.0 } else { r };
                *v = serde_json::Number::from_f64(r).map_or(Value::Null, Value::Number);
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round6),
        Value::Object(map) => map.values_mut().for_each(round6),
        _ => {}
    }
}

pub fn json_string(mut v: Value) -> String {
    round6(&mut v);
    pretty(&v)
}

pub fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

/// `1 1;1 2` form used inside CSV cells.
pub fn matrix_cell(a: &IntMatrix) -> String {
    (0..a.nrows())
        .map(|i| (0..a.ncols()).map(|j| a[(i, j)].to_string()).collect::<Vec<_>>().join(" "))
        .collect::<Vec<_>>()
        .join(";")
}

pub fn join6(xs: &[f64]) -> String {
    xs.iter().map(|&x| fmt6(x)).collect::<Vec<_>>().join(",")
}
