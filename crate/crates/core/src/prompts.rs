//! Versioned prompt assets and a single-pass `{{name}}` renderer.

pub const EXTRACT_EVENTS: &str = include_str!("../prompts/extract_events_v1.txt");
pub const RESOLVE_COREFERENCE: &str = include_str!("../prompts/resolve_coreference_v1.txt");
pub const PARSE_QUERY: &str = include_str!("../prompts/parse_query_v1.txt");
pub const TIME_COT: &str = include_str!("../prompts/time_cot_v1.txt");
pub const TIME_COT_SYSTEM: &str = include_str!("../prompts/time_cot_system_v1.txt");

pub const TEMPLATE_VERSION: &str = "v1";

/// Substitutes `{{name}}` placeholders in one pass; values are never re-scanned.
/// Unknown placeholders are left as they are.
pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find("{{") {
        out.push_str(&rest[..open]);
        let after = &rest[open + 2..];
        match after.find("}}") {
            Some(close) => {
                let name = &after[..close];
                match vars.iter().find(|(k, _)| *k == name) {
                    Some((_, v)) => out.push_str(v),
                    None => {
                        out.push_str("{{");
                        out.push_str(name);
                        out.push_str("}}");
                    }
                }
                rest = &after[close + 2..];
            }
            None => {
                out.push_str(&rest[open..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_once() {
        assert_eq!(render("a {{x}} b {{y}}", &[("x", "{{y}}"), ("y", "2")]), "a {{y}} b 2");
        assert_eq!(render("{{missing}} {{", &[]), "{{missing}} {{");
    }

    #[test]
    fn assets_carry_task_lines() {
        for (asset, task) in [
            (EXTRACT_EVENTS, "extract_events"),
            (RESOLVE_COREFERENCE, "resolve_coreference"),
            (PARSE_QUERY, "parse_query"),
            (TIME_COT, "time_cot_answer"),
        ] {
            assert_eq!(crate::gateway::prompt_task(asset), Some(task));
        }
    }
}
