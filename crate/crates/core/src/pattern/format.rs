use std::fmt;

use super::{GuardPredicate, PatternExpr, SECONDS_PER_DAY, SECONDS_PER_HOUR, SECONDS_PER_MINUTE};

pub(crate) fn format_duration(seconds: u64) -> String {
    if seconds != 0 && seconds.is_multiple_of(SECONDS_PER_DAY) {
        format!("{} days", seconds / SECONDS_PER_DAY)
    } else if seconds != 0 && seconds.is_multiple_of(SECONDS_PER_HOUR) {
        format!("{} h", seconds / SECONDS_PER_HOUR)
    } else if seconds != 0 && seconds.is_multiple_of(SECONDS_PER_MINUTE) {
        format!("{} min", seconds / SECONDS_PER_MINUTE)
    } else {
        format!("{seconds} s")
    }
}

fn write_literal(f: &mut fmt::Formatter<'_>, lit: &str) -> fmt::Result {
    f.write_str("\"")?;
    for c in lit.chars() {
        match c {
            '"' => f.write_str("\\\"")?,
            '\\' => f.write_str("\\\\")?,
            c => write!(f, "{c}")?,
        }
    }
    f.write_str("\"")
}

impl fmt::Display for GuardPredicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, c) in self.clauses.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{} {} ", c.key, c.op)?;
            write_literal(f, &c.literal)?;
        }
        f.write_str("}")
    }
}

impl fmt::Display for PatternExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PatternExpr::Atom { event_type, guard } => {
                f.write_str(event_type)?;
                if let Some(g) = guard {
                    write!(f, "{g}")?;
                }
                Ok(())
            }
            PatternExpr::Seq(xs) => {
                f.write_str("SEQ(")?;
                for (i, x) in xs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{x}")?;
                }
                f.write_str(")")
            }
            PatternExpr::And(l, r) => write!(f, "AND({l}, {r})"),
            PatternExpr::Or(l, r) => write!(f, "OR({l}, {r})"),
            PatternExpr::Not(c) => write!(f, "NOT({c})"),
            PatternExpr::Times(c, n) => write!(f, "TIMES({c}, {n})"),
            PatternExpr::OneOrMore(c) => write!(f, "ONE_OR_MORE({c})"),
            PatternExpr::Optional(c) => write!(f, "OPTIONAL({c})"),
            PatternExpr::Within(c, d) => write!(f, "WITHIN({c}, {})", format_duration(*d)),
        }
    }
}
