use serde_json::Value;

/// Applies `key=value` to a JSON document. `key` is a dotted path whose
/// segments are object keys or array indices; `value` is parsed as JSON and
/// falls back to a plain string.
pub fn apply(doc: &mut Value, assignment: &str) -> Result<(), String> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| format!("override `{assignment}` is not of the form key=value"))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(format!("override `{assignment}` has an empty key"));
    }
    let value = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = doc;
    for seg in key.split('.') {
        node = match node {
            Value::Object(map) => map
                .get_mut(seg)
                .ok_or_else(|| format!("unknown config key `{key}`"))?,
            Value::Array(items) => {
                let len = items.len();
                seg.parse::<usize>()
                    .ok()
                    .and_then(|i| items.get_mut(i))
                    .ok_or_else(|| format!("config key `{key}`: `{seg}` is not an index below {len}"))?
            }
            _ => return Err(format!("config key `{key}`: `{seg}` indexes into a scalar")),
        };
    }
    *node = value;
    Ok(())
}
