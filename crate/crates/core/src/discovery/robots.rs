//! Minimal robots.txt reading: `Disallow` prefixes for `User-agent: *`.

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RobotsRules {
    disallow: Vec<String>,
    allow: Vec<String>,
}

impl RobotsRules {
    pub fn parse(text: &str) -> Self {
        let mut rules = RobotsRules::default();
        let mut in_star_group = false;
        let mut last_was_agent = false;
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            let Some((key, value)) = line.split_once(':') else {
                continue;
            };
            let key = key.trim().to_ascii_lowercase();
            let value = value.trim();
            match key.as_str() {
                "user-agent" => {
                    if !last_was_agent {
                        in_star_group = false;
                    }
                    in_star_group |= value == "*";
                    last_was_agent = true;
                }
                "disallow" if in_star_group => {
                    last_was_agent = false;
                    if !value.is_empty() {
                        rules.disallow.push(value.to_string());
                    }
                }
                "allow" if in_star_group => {
                    last_was_agent = false;
                    rules.allow.push(value.to_string());
                }
                _ => last_was_agent = false,
            }
        }
        rules
    }

    /// Longest matching prefix wins; ties go to allow.
    pub fn is_disallowed(&self, path_and_query: &str) -> bool {
        let longest = |set: &[String]| {
            set.iter()
                .filter(|p| path_and_query.starts_with(p.as_str()))
                .map(String::len)
                .max()
        };
        match (longest(&self.disallow), longest(&self.allow)) {
            (Some(d), Some(a)) => d > a,
            (Some(_), None) => true,
            _ => false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn star_group_only() {
        let r = RobotsRules::parse(
            "User-agent: googlebot\nDisallow: /g\n\nUser-agent: *\nDisallow: /private\nAllow: /private/open\n",
        );
        assert!(r.is_disallowed("/private/x"));
        assert!(!r.is_disallowed("/private/open/y"));
        assert!(!r.is_disallowed("/g/1"));
        assert!(!r.is_disallowed("/"));
    }

    #[test]
    fn empty_disallow_allows_all() {
        let r = RobotsRules::parse("User-agent: *\nDisallow:\n");
        assert!(!r.is_disallowed("/anything"));
    }
}
