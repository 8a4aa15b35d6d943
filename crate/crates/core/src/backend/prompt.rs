//! Structured prompt layout shared by operators and the simulated model.
//!
//! ```text
//! ### task: filter
//! ## criterion
//! mentions "sepsis"
//! ## document
//! Patient febrile, sepsis suspected.
//! ```
//!
//! Body lines that start with `#` are escaped with a leading backslash so a
//! document can never open a section of its own.

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompt {
    pub task: String,
    pub sections: Vec<(String, String)>,
}

impl Prompt {
    pub fn new(task: impl Into<String>) -> Self {
        Prompt {
            task: task.into(),
            sections: Vec::new(),
        }
    }

    pub fn section(mut self, name: impl Into<String>, body: impl Into<String>) -> Self {
        self.sections.push((name.into(), body.into()));
        self
    }

    /// First section with this name.
    pub fn get(&self, name: &str) -> Option<&str> {
        self.sections.iter().find(|(n, _)| n == name).map(|(_, b)| b.as_str())
    }

    pub fn all<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.sections
            .iter()
            .filter(move |(n, _)| n == name)
            .map(|(_, b)| b.as_str())
    }

    pub fn render(&self) -> String {
        let mut out = format!("### task: {}\n", self.task);
        for (name, body) in &self.sections {
            out.push_str("## ");
            out.push_str(name);
            out.push('\n');
            for line in body.lines() {
                if line.starts_with('#') || line.starts_with('\\') {
                    out.push('\\');
                }
                out.push_str(line);
                out.push('\n');
            }
        }
        out
    }

    pub fn parse(text: &str) -> Option<Prompt> {
        let mut lines = text.lines();
        let task = lines.next()?.strip_prefix("### task: ")?.trim().to_string();
        let mut p = Prompt::new(task);
        let mut current: Option<(String, Vec<&str>)> = None;
        for line in lines {
            if let Some(name) = line.strip_prefix("## ") {
                if let Some((n, body)) = current.take() {
                    p.sections.push((n, body.join("\n")));
                }
                current = Some((name.trim().to_string(), Vec::new()));
            } else if let Some((_, body)) = current.as_mut() {
                body.push(line.strip_prefix('\\').unwrap_or(line));
            }
        }
        if let Some((n, body)) = current {
            p.sections.push((n, body.join("\n")));
        }
        Some(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_with_hostile_body() {
        let p = Prompt::new("extract")
            .section("document", "line one\n## not a header\n\\slash\n#tag")
            .section("note", "");
        let text = p.render();
        assert_eq!(text.lines().filter(|l| l.starts_with("## ")).count(), 2);
        assert_eq!(Prompt::parse(&text).unwrap(), p);
    }

    #[test]
    fn unstructured_text_is_not_a_prompt() {
        assert!(Prompt::parse("just words").is_none());
    }
}
