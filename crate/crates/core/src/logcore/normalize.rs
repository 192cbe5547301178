//! Line normalization: case folding, placeholder substitution, whitespace cleanup.

use regex::Regex;
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

/// A single regex → placeholder substitution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NormalizationRule {
    pub name: String,
    #[serde(with = "serde_regex")]
    pub pattern: Regex,
    pub placeholder: String,
}

impl NormalizationRule {
    pub fn new(name: &str, pattern: &str, placeholder: &str) -> Result<Self, regex::Error> {
        Ok(Self {
            name: name.to_string(),
            pattern: Regex::new(pattern)?,
            placeholder: placeholder.to_string(),
        })
    }
}

mod serde_regex {
    use regex::Regex;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(re: &Regex, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(re.as_str())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Regex, D::Error> {
        let text = String::deserialize(d)?;
        Regex::new(&text).map_err(serde::de::Error::custom)
    }
}

/// Block IDs, then dotted-quad IPv4 addresses, then any remaining digit run.
pub fn default_rules() -> &'static [NormalizationRule] {
    static RULES: OnceLock<Vec<NormalizationRule>> = OnceLock::new();
    RULES.get_or_init(|| {
        vec![
            NormalizationRule::new("block_id", r"blk_-?\d+", "<BLK>").unwrap(),
            NormalizationRule::new(
                "ipv4",
                r"\b(?:\d{1,3}\.){3}\d{1,3}\b",
                "<IP>",
            )
            .unwrap(),
            NormalizationRule::new("integer", r"\d+", "<NUM>").unwrap(),
        ]
    })
}

/// Normalize one raw log line.
///
/// Text is lowercased, except for substrings that already equal one of the
/// rules' placeholders, so normalizing twice gives the same result.
pub fn normalize_line(raw: &str, rules: &[NormalizationRule]) -> String {
    let mut text = fold_case_preserving(raw, rules);
    for rule in rules {
        if rule.pattern.is_match(&text) {
            text = rule
                .pattern
                .replace_all(&text, regex::NoExpand(&rule.placeholder))
                .into_owned();
        }
    }
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn fold_case_preserving(raw: &str, rules: &[NormalizationRule]) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut rest = raw;
    'outer: while !rest.is_empty() {
        for rule in rules {
            let ph = rule.placeholder.as_str();
            if !ph.is_empty() && rest.starts_with(ph) {
                out.push_str(ph);
                rest = &rest[ph.len()..];
                continue 'outer;
            }
        }
        let ch = rest.chars().next().expect("non-empty");
        out.extend(ch.to_lowercase());
        rest = &rest[ch.len_utf8()..];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn norm(s: &str) -> String {
        normalize_line(s, default_rules())
    }

    #[test]
    fn hdfs_received_block() {
        assert_eq!(
            norm("Received block blk_-1608999687919862906 of size 91178 from /10.250.19.102"),
            "received block <BLK> of size <NUM> from /<IP>"
        );
    }

    #[test]
    fn empty_and_whitespace() {
        assert_eq!(norm(""), "");
        assert_eq!(norm("   \t "), "");
        assert_eq!(norm("ERROR   ERROR"), "error error");
    }

    #[test]
    fn ip_with_port() {
        assert_eq!(
            norm("dest: /10.251.71.16:50010"),
            "dest: /<IP>:<NUM>"
        );
    }

    #[test]
    fn positive_block_id_and_digits_inside_words() {
        assert_eq!(norm("blk_42 part-00017 x9y"), "<BLK> part-<NUM> x<NUM>y");
    }

    #[test]
    fn placeholders_survive_case_folding() {
        let once = norm("Served block blk_123 to /10.0.0.1");
        assert_eq!(norm(&once), once);
        assert!(once.contains("<BLK>"));
    }

    #[test]
    fn no_volatile_fields_remain() {
        let out = norm("PacketResponder 1 for block blk_38865049064139660 terminating 10.1.2.3");
        assert!(!out.chars().any(|c| c.is_ascii_digit()));
        assert!(!out.contains("blk_"));
    }

    #[test]
    fn custom_rule_order_matters() {
        // Integers first swallows the IP before the IP rule can see it.
        let rules = vec![
            NormalizationRule::new("integer", r"\d+", "<NUM>").unwrap(),
            NormalizationRule::new("ipv4", r"\b(?:\d{1,3}\.){3}\d{1,3}\b", "<IP>").unwrap(),
        ];
        assert_eq!(normalize_line("from 10.0.0.1", &rules), "from <NUM>.<NUM>.<NUM>.<NUM>");
    }

    #[test]
    fn rules_round_trip_through_json() {
        let json = serde_json::to_string(default_rules()).unwrap();
        let back: Vec<NormalizationRule> = serde_json::from_str(&json).unwrap();
        assert_eq!(back.len(), 3);
        assert_eq!(back[1].pattern.as_str(), default_rules()[1].pattern.as_str());
    }
}
