use thiserror::Error;

use super::{
    GuardClause, GuardOp, GuardPredicate, PatternExpr, SECONDS_PER_DAY, SECONDS_PER_HOUR,
    SECONDS_PER_MINUTE,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("invalid duration at byte {offset}: {message}")]
    Duration { offset: usize, message: String },
}

impl ParseError {
    pub fn offset(&self) -> usize {
        match self {
            ParseError::Syntax { offset, .. } | ParseError::Duration { offset, .. } => *offset,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            ParseError::Syntax { .. } => "SyntaxError",
            ParseError::Duration { .. } => "DurationError",
        }
    }
}

pub fn parse_pattern(text: &str) -> Result<PatternExpr, ParseError> {
    let mut p = Parser { src: text, pos: 0 };
    let expr = p.expr()?;
    p.skip_ws();
    if p.pos != text.len() {
        return Err(p.syntax("unexpected trailing input"));
    }
    Ok(expr)
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

const KEYWORDS: &[&str] = &[
    "SEQ",
    "AND",
    "OR",
    "NOT",
    "TIMES",
    "ONE_OR_MORE",
    "OPTIONAL",
    "WITHIN",
];

impl<'a> Parser<'a> {
    fn syntax(&self, message: impl Into<String>) -> ParseError {
        ParseError::Syntax {
            offset: self.pos,
            message: message.into(),
        }
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<(), ParseError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.syntax(match self.peek() {
                Some(found) => format!("expected '{c}', found '{found}'"),
                None => format!("expected '{c}', found end of input"),
            }))
        }
    }

    fn ident(&mut self) -> Result<&'a str, ParseError> {
        self.skip_ws();
        let start = self.pos;
        let rest = self.rest();
        let mut end = 0;
        for (i, c) in rest.char_indices() {
            let ok = if i == 0 {
                c.is_ascii_alphabetic() || c == '_'
            } else {
                c.is_ascii_alphanumeric() || c == '_' || c == '.' || c == '-'
            };
            if !ok {
                break;
            }
            end = i + c.len_utf8();
        }
        if end == 0 {
            return Err(self.syntax(match self.peek() {
                Some(c) => format!("expected identifier, found '{c}'"),
                None => "expected identifier, found end of input".to_string(),
            }));
        }
        self.pos = start + end;
        Ok(&self.src[start..start + end])
    }

    fn integer(&mut self) -> Result<(i64, usize), ParseError> {
        self.skip_ws();
        let start = self.pos;
        let mut end = 0;
        for (i, c) in self.rest().char_indices() {
            if c.is_ascii_digit() || (i == 0 && c == '-') {
                end = i + 1;
            } else {
                break;
            }
        }
        let digits = &self.src[start..start + end];
        if digits.is_empty() || digits == "-" {
            return Err(self.syntax("expected integer"));
        }
        let value = digits.parse::<i64>().map_err(|_| ParseError::Syntax {
            offset: start,
            message: format!("integer out of range: {digits}"),
        })?;
        self.pos = start + end;
        Ok((value, start))
    }

    fn expr(&mut self) -> Result<PatternExpr, ParseError> {
        self.skip_ws();
        let start = self.pos;
        let name = self.ident()?;
        let upper = name.to_ascii_uppercase();
        let is_call = {
            let save = self.pos;
            let call = self.eat('(');
            self.pos = save;
            call
        };
        if is_call && KEYWORDS.contains(&upper.as_str()) {
            self.expect('(')?;
            let e = self.keyword(&upper)?;
            self.expect(')')?;
            return Ok(e);
        }
        if is_call {
            self.pos = start;
            return Err(self.syntax(format!("unknown operator '{name}'")));
        }
        let guard = if self.eat('{') {
            Some(self.guard()?)
        } else {
            None
        };
        Ok(PatternExpr::Atom {
            event_type: name.to_string(),
            guard,
        })
    }

    fn keyword(&mut self, kw: &str) -> Result<PatternExpr, ParseError> {
        Ok(match kw {
            "SEQ" => {
                let mut children = Vec::new();
                self.skip_ws();
                if self.peek() != Some(')') {
                    loop {
                        children.push(self.expr()?);
                        if !self.eat(',') {
                            break;
                        }
                    }
                }
                PatternExpr::Seq(children)
            }
            "AND" | "OR" => {
                let l = self.expr()?;
                self.expect(',')?;
                let r = self.expr()?;
                if kw == "AND" {
                    PatternExpr::and(l, r)
                } else {
                    PatternExpr::or(l, r)
                }
            }
            "NOT" => PatternExpr::not(self.expr()?),
            "ONE_OR_MORE" => PatternExpr::one_or_more(self.expr()?),
            "OPTIONAL" => PatternExpr::optional(self.expr()?),
            "TIMES" => {
                let c = self.expr()?;
                self.expect(',')?;
                let (n, at) = self.integer()?;
                if n < 1 || n > u32::MAX as i64 {
                    return Err(ParseError::Syntax {
                        offset: at,
                        message: format!("repetition count must be at least 1, got {n}"),
                    });
                }
                PatternExpr::times(c, n as u32)
            }
            "WITHIN" => {
                let c = self.expr()?;
                self.expect(',')?;
                let seconds = self.duration()?;
                PatternExpr::within(c, seconds)
            }
            _ => unreachable!("keyword list and dispatch disagree"),
        })
    }

    fn duration(&mut self) -> Result<u64, ParseError> {
        let (n, at) = self.integer()?;
        self.skip_ws();
        let unit_at = self.pos;
        let unit = self.ident().map_err(|_| ParseError::Duration {
            offset: unit_at,
            message: "missing unit (expected s, min, h or days)".into(),
        })?;
        let scale = match unit.to_ascii_lowercase().as_str() {
            "s" | "sec" | "secs" | "second" | "seconds" => 1,
            "min" | "mins" | "minute" | "minutes" => SECONDS_PER_MINUTE,
            "h" | "hr" | "hrs" | "hour" | "hours" => SECONDS_PER_HOUR,
            "d" | "day" | "days" => SECONDS_PER_DAY,
            other => {
                return Err(ParseError::Duration {
                    offset: unit_at,
                    message: format!("unknown unit '{other}'"),
                })
            }
        };
        if n <= 0 {
            return Err(ParseError::Duration {
                offset: at,
                message: format!("duration must be positive, got {n} {unit}"),
            });
        }
        (n as u64).checked_mul(scale).ok_or(ParseError::Duration {
            offset: at,
            message: "duration overflows".into(),
        })
    }

    fn guard(&mut self) -> Result<GuardPredicate, ParseError> {
        let mut clauses = Vec::new();
        loop {
            let key = self.ident()?.to_string();
            self.skip_ws();
            let op = if self.rest().starts_with("!=") {
                self.pos += 2;
                GuardOp::Ne
            } else if self.rest().starts_with('=') {
                self.pos += 1;
                GuardOp::Eq
            } else if self.rest().len() >= 8 && self.rest()[..8].eq_ignore_ascii_case("contains") {
                self.pos += 8;
                GuardOp::Contains
            } else {
                return Err(self.syntax("expected '=', '!=' or 'contains'"));
            };
            let literal = self.literal()?;
            clauses.push(GuardClause { key, op, literal });
            if self.eat('}') {
                break;
            }
            self.expect(',')?;
        }
        Ok(GuardPredicate { clauses })
    }

    fn literal(&mut self) -> Result<String, ParseError> {
        self.skip_ws();
        if self.peek() != Some('"') {
            // bare word
            let start = self.pos;
            while let Some(c) = self.peek() {
                if c.is_alphanumeric() || c == '_' || c == '-' || c == '.' {
                    self.pos += c.len_utf8();
                } else {
                    break;
                }
            }
            if start == self.pos {
                return Err(self.syntax("expected literal"));
            }
            return Ok(self.src[start..self.pos].to_string());
        }
        self.pos += 1;
        let mut out = String::new();
        loop {
            let Some(c) = self.peek() else {
                return Err(self.syntax("unterminated string literal"));
            };
            self.pos += c.len_utf8();
            match c {
                '"' => return Ok(out),
                '\\' => {
                    let Some(esc) = self.peek() else {
                        return Err(self.syntax("unterminated escape"));
                    };
                    self.pos += esc.len_utf8();
                    out.push(esc);
                }
                c => out.push(c),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_discharge_pattern() {
        let e = parse_pattern("SEQ(Discharge, WITHIN(NOT(FollowUp), 30 days))").unwrap();
        assert_eq!(
            e,
            PatternExpr::seq(vec![
                PatternExpr::atom("Discharge"),
                PatternExpr::within(PatternExpr::not(PatternExpr::atom("FollowUp")), 2_592_000),
            ])
        );
    }

    #[test]
    fn parses_window_over_sequence_with_negation() {
        let e = parse_pattern("WITHIN(SEQ(A, NOT(B)), 10 s)").unwrap();
        assert_eq!(
            e,
            PatternExpr::within(
                PatternExpr::seq(vec![PatternExpr::atom("A"), PatternExpr::not(PatternExpr::atom("B"))]),
                10
            )
        );
    }

    #[test]
    fn keywords_are_case_insensitive() {
        let e = parse_pattern("seq(a, times(B, 3), one_or_more(C), optional(D))").unwrap();
        assert_eq!(e.to_string(), "SEQ(a, TIMES(B, 3), ONE_OR_MORE(C), OPTIONAL(D))");
    }

    #[test]
    fn unbalanced_input_reports_trailing_offset() {
        let err = parse_pattern("SEQ(A,").unwrap_err();
        assert!(matches!(err, ParseError::Syntax { offset: 6, .. }), "{err:?}");
    }

    #[test]
    fn zero_and_negative_durations_rejected() {
        let err = parse_pattern("WITHIN(A, 0 days)").unwrap_err();
        assert!(matches!(err, ParseError::Duration { offset: 10, .. }), "{err:?}");
        let err = parse_pattern("WITHIN(A, -5 s)").unwrap_err();
        assert!(matches!(err, ParseError::Duration { .. }));
        let err = parse_pattern("WITHIN(A, 5 weeks)").unwrap_err();
        assert!(matches!(err, ParseError::Duration { .. }));
    }

    #[test]
    fn units_normalize_to_seconds() {
        for (text, secs) in [("10 s", 10), ("3 min", 180), ("2 h", 7200), ("1 days", 86_400)] {
            let e = parse_pattern(&format!("WITHIN(A, {text})")).unwrap();
            assert_eq!(e, PatternExpr::within(PatternExpr::atom("A"), secs));
        }
    }

    #[test]
    fn guards_parse() {
        let e = parse_pattern(r#"Discharge{dest = "home", note contains "rehab", ward != icu}"#).unwrap();
        let PatternExpr::Atom { guard: Some(g), .. } = e else {
            panic!("expected guarded atom")
        };
        assert_eq!(g.clauses.len(), 3);
        assert_eq!(g.clauses[1].op, GuardOp::Contains);
        assert_eq!(g.clauses[2].literal, "icu");
    }

    #[test]
    fn rejects_junk() {
        assert!(parse_pattern("").is_err());
        assert!(parse_pattern("FOO(A)").is_err());
        assert!(parse_pattern("SEQ(A, B) extra").is_err());
        assert!(parse_pattern("TIMES(A, 0)").is_err());
        assert!(parse_pattern("AND(A)").is_err());
    }

    #[test]
    fn empty_seq_parses_for_validation() {
        assert_eq!(parse_pattern("SEQ()").unwrap(), PatternExpr::Seq(vec![]));
    }
}
