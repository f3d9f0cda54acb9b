use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};

use super::{Category, Judge, JudgeError, UtteranceLabel};

/// One ordered rule. Matches when the pattern or any keyword hits (either
/// alone suffices; with neither the rule always hits) and every `require`
/// substring is present. Matching is case-insensitive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub category: Category,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pattern: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub keywords: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub require: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RuleFile {
    #[serde(default)]
    rule: Vec<Rule>,
}

/// First matching rule wins; nothing matching gives `Other`.
#[derive(Debug, Clone)]
pub struct RuleSet {
    rules: Vec<Rule>,
    compiled: Vec<Option<Regex>>,
}

impl PartialEq for RuleSet {
    fn eq(&self, other: &Self) -> bool {
        self.rules == other.rules
    }
}

fn rule(category: Category, keywords: &[&str], require: &[&str]) -> Rule {
    Rule {
        category,
        pattern: None,
        keywords: keywords.iter().map(|s| s.to_string()).collect(),
        require: require.iter().map(|s| s.to_string()).collect(),
    }
}

impl Default for RuleSet {
    fn default() -> Self {
        let mut info = rule(
            Category::InfoSharing,
            &["status", "report", "forecast", "update", "is now", "reading", "detected", "available", "shows"],
            &[],
        );
        info.pattern = Some(r"\d".into());
        RuleSet::new(vec![
            rule(
                Category::ClarificationRequest,
                &["clarify", "what do you mean", "could you explain", "do you mean", "which", "confirm", "specify"],
                &["?"],
            ),
            rule(
                Category::Agreement,
                &["i agree", "building on that", "agreed", "good point", "sounds good", "exactly right", "i support"],
                &[],
            ),
            rule(
                Category::Critique,
                &["however", "we should also consider", "i disagree", "on the other hand", "but what about", "concern"],
                &[],
            ),
            rule(
                Category::Negotiation,
                &["offer", "counter", "compromise", "in exchange", "propose", "split", "approval", "deal"],
                &[],
            ),
            rule(
                Category::Persuasion,
                &["you should", "trust me", "clearly", "strongly recommend", "we must", "convince"],
                &[],
            ),
            info,
        ])
        .expect("default rules compile")
    }
}

impl RuleSet {
    pub fn new(rules: Vec<Rule>) -> Result<Self, JudgeError> {
        let compiled = rules
            .iter()
            .map(|r| {
                r.pattern
                    .as_ref()
                    .map(|p| {
                        RegexBuilder::new(p)
                            .case_insensitive(true)
                            .build()
                            .map_err(|e| JudgeError::Ruleset(e.to_string()))
                    })
                    .transpose()
            })
            .collect::<Result<_, _>>()?;
        Ok(RuleSet { rules, compiled })
    }

    /// Parses a TOML pattern file of `[[rule]]` tables.
    pub fn from_toml(text: &str) -> Result<Self, JudgeError> {
        let file: RuleFile = toml::from_str(text).map_err(|e| JudgeError::Ruleset(e.to_string()))?;
        RuleSet::new(file.rule)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&RuleFile { rule: self.rules.clone() }).expect("rules serialise")
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    /// Experimental extension for classifying how a dispute was settled.
    pub fn with_resolution_rules(mut self) -> Self {
        let extra = [
            rule(
                Category::Custom("resolution_coercion".into()),
                &["or else", "no choice", "final warning", "override"],
                &[],
            ),
            rule(
                Category::Custom("resolution_principled".into()),
                &["both goals", "shared criteria", "mutually acceptable", "objective criteria"],
                &[],
            ),
        ];
        for (i, r) in extra.into_iter().enumerate() {
            self.rules.insert(i, r);
            self.compiled.insert(i, None);
        }
        self
    }

    fn matches(&self, i: usize, lower: &str, raw: &str) -> bool {
        let r = &self.rules[i];
        let hit = match (&self.compiled[i], r.keywords.is_empty()) {
            (None, true) => true,
            (re, _) => {
                re.as_ref().is_some_and(|re| re.is_match(raw))
                    || r.keywords.iter().any(|k| lower.contains(&k.to_lowercase()))
            }
        };
        hit && r.require.iter().all(|q| lower.contains(&q.to_lowercase()))
    }
}

impl Judge for RuleSet {
    fn label(&self, content: &str) -> UtteranceLabel {
        if content.trim().is_empty() {
            return UtteranceLabel::certain(Category::Other);
        }
        let lower = content.to_lowercase();
        (0..self.rules.len())
            .find(|&i| self.matches(i, &lower, content))
            .map(|i| UtteranceLabel::certain(self.rules[i].category.clone()))
            .unwrap_or(UtteranceLabel::certain(Category::Other))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cat(s: &str) -> Category {
        RuleSet::default().label(s).category
    }

    #[test]
    fn default_examples() {
        assert_eq!(cat("Could you clarify the units?"), Category::ClarificationRequest);
        assert_eq!(cat("I agree, building on that idea..."), Category::Agreement);
        assert_eq!(cat("However, we should also consider trade shows."), Category::Critique);
        assert_eq!(cat(""), Category::Other);
        assert_eq!(cat("Forecast: 10.5K units next quarter"), Category::InfoSharing);
        assert_eq!(cat("hello"), Category::Other);
    }

    #[test]
    fn toml_round_trip() {
        let rs = RuleSet::default();
        let back = RuleSet::from_toml(&rs.to_toml()).unwrap();
        assert_eq!(back, rs);
    }

    #[test]
    fn custom_file() {
        let rs = RuleSet::from_toml(
            r#"
            [[rule]]
            category = "negotiation"
            pattern = "\\$\\d"
            "#,
        )
        .unwrap();
        assert_eq!(rs.label("orders of $9,999").category, Category::Negotiation);
        assert_eq!(rs.label("no money").category, Category::Other);
    }

    #[test]
    fn bad_pattern_is_rejected() {
        assert!(RuleSet::from_toml("[[rule]]\ncategory = \"other\"\npattern = \"(\"\n").is_err());
    }
}
