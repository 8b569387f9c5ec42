//! Plain-text rule files.
//!
//! ```text
//! # comment
//! rule     := ID ':=' pred ( '&&' pred )*
//! pred     := column '==' STRING
//!           | column 'in' '[' NUMBER ',' NUMBER ']'
//!           | 'tokens' '~' '[' INT ( ',' INT )* ']'
//! column   := ID | STRING
//! ID       := [A-Za-z_][A-Za-z0-9_.-]*
//! STRING   := '"' ( [^"\\] | '\\"' | '\\\\' )* '"'
//! ```
//!
//! One rule per line. A column literally named `tokens` must be quoted.

use super::{Predicate, SignatureError, SignatureRule};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Str(String),
    Num(String),
    Define,
    And,
    EqEq,
    Tilde,
    LBracket,
    RBracket,
    Comma,
}

fn lex(line: &str, lineno: usize) -> Result<Vec<Tok>, SignatureError> {
    let err = |m: String| SignatureError::Parse { line: lineno, message: m };
    let chars: Vec<char> = line.chars().collect();
    let mut i = 0;
    let mut out = Vec::new();
    while i < chars.len() {
        let c = chars[i];
        match c {
            c if c.is_whitespace() => i += 1,
            '#' => break,
            '"' => {
                let mut s = String::new();
                i += 1;
                loop {
                    match chars.get(i) {
                        None => return Err(err("unterminated string".into())),
                        Some('"') => {
                            i += 1;
                            break;
                        }
                        Some('\\') => {
                            match chars.get(i + 1) {
                                Some(&e @ ('"' | '\\')) => s.push(e),
                                _ => return Err(err("bad escape in string".into())),
                            }
                            i += 2;
                        }
                        Some(&ch) => {
                            s.push(ch);
                            i += 1;
                        }
                    }
                }
                out.push(Tok::Str(s));
            }
            ':' if chars.get(i + 1) == Some(&'=') => {
                out.push(Tok::Define);
                i += 2;
            }
            '&' if chars.get(i + 1) == Some(&'&') => {
                out.push(Tok::And);
                i += 2;
            }
            '=' if chars.get(i + 1) == Some(&'=') => {
                out.push(Tok::EqEq);
                i += 2;
            }
            '~' => {
                out.push(Tok::Tilde);
                i += 1;
            }
            '[' => {
                out.push(Tok::LBracket);
                i += 1;
            }
            ']' => {
                out.push(Tok::RBracket);
                i += 1;
            }
            ',' => {
                out.push(Tok::Comma);
                i += 1;
            }
            c if c.is_ascii_digit() || c == '-' || c == '+' || c == '.' => {
                let start = i;
                while i < chars.len()
                    && (chars[i].is_ascii_alphanumeric() || matches!(chars[i], '.' | '-' | '+'))
                {
                    i += 1;
                }
                out.push(Tok::Num(chars[start..i].iter().collect()));
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len()
                    && (chars[i].is_ascii_alphanumeric() || matches!(chars[i], '_' | '.' | '-'))
                {
                    i += 1;
                }
                out.push(Tok::Ident(chars[start..i].iter().collect()));
            }
            other => return Err(err(format!("unexpected character `{other}`"))),
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
    line: usize,
}

impl Parser {
    fn err(&self, m: impl Into<String>) -> SignatureError {
        SignatureError::Parse { line: self.line, message: m.into() }
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), SignatureError> {
        match self.next() {
            Some(t) if t == want => Ok(()),
            _ => Err(self.err(format!("expected {what}"))),
        }
    }

    fn number(&mut self) -> Result<f64, SignatureError> {
        match self.next() {
            Some(Tok::Num(n)) => n.parse().map_err(|_| self.err(format!("bad number `{n}`"))),
            _ => Err(self.err("expected number")),
        }
    }

    fn predicate(&mut self) -> Result<Predicate, SignatureError> {
        let (column, quoted) = match self.next() {
            Some(Tok::Ident(s)) => (s, false),
            Some(Tok::Str(s)) => (s, true),
            _ => return Err(self.err("expected column name or `tokens`")),
        };
        match self.next() {
            Some(Tok::Tilde) if column == "tokens" && !quoted => {
                self.expect(Tok::LBracket, "`[`")?;
                let mut ids = Vec::new();
                loop {
                    match self.next() {
                        Some(Tok::Num(n)) => {
                            ids.push(n.parse::<u32>().map_err(|_| self.err(format!("bad token id `{n}`")))?)
                        }
                        _ => return Err(self.err("expected token id")),
                    }
                    match self.next() {
                        Some(Tok::Comma) => continue,
                        Some(Tok::RBracket) => break,
                        _ => return Err(self.err("expected `,` or `]`")),
                    }
                }
                Ok(Predicate::Tokens(ids))
            }
            Some(Tok::EqEq) => match self.next() {
                Some(Tok::Str(value)) => Ok(Predicate::Equals { column, value }),
                _ => Err(self.err("expected quoted value after `==`")),
            },
            Some(Tok::Ident(kw)) if kw == "in" => {
                self.expect(Tok::LBracket, "`[`")?;
                let lo = self.number()?;
                self.expect(Tok::Comma, "`,`")?;
                let hi = self.number()?;
                self.expect(Tok::RBracket, "`]`")?;
                Ok(Predicate::InRange { column, lo, hi })
            }
            _ => Err(self.err("expected `==`, `in` or `~`")),
        }
    }

    fn rule(&mut self) -> Result<SignatureRule, SignatureError> {
        let id = match self.next() {
            Some(Tok::Ident(s)) => s,
            _ => return Err(self.err("expected rule id")),
        };
        self.expect(Tok::Define, "`:=`")?;
        let mut predicates = vec![self.predicate()?];
        while let Some(t) = self.next() {
            if t != Tok::And {
                return Err(self.err("expected `&&` or end of line"));
            }
            predicates.push(self.predicate()?);
        }
        Ok(SignatureRule { id, predicates })
    }
}

/// Parse a rule file. Line numbers in errors are 1-based.
pub fn parse_rules(text: &str) -> Result<Vec<SignatureRule>, SignatureError> {
    let mut rules = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let toks = lex(line, i + 1)?;
        if toks.is_empty() {
            continue;
        }
        rules.push(Parser { toks, pos: 0, line: i + 1 }.rule()?);
    }
    Ok(rules)
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

fn column_text(c: &str) -> String {
    let bare = c != "tokens"
        && c != "in"
        && c.chars().next().is_some_and(|ch| ch.is_ascii_alphabetic() || ch == '_')
        && c.chars().all(|ch| ch.is_ascii_alphanumeric() || matches!(ch, '_' | '.' | '-'));
    if bare {
        c.to_string()
    } else {
        quote(c)
    }
}

impl std::fmt::Display for Predicate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Predicate::Equals { column, value } => write!(f, "{} == {}", column_text(column), quote(value)),
            Predicate::InRange { column, lo, hi } => {
                write!(f, "{} in [{lo:?}, {hi:?}]", column_text(column))
            }
            Predicate::Tokens(ids) => {
                let ids: Vec<String> = ids.iter().map(u32::to_string).collect();
                write!(f, "tokens ~ [{}]", ids.join(", "))
            }
        }
    }
}

impl std::fmt::Display for SignatureRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} := ", self.id)?;
        for (i, p) in self.predicates.iter().enumerate() {
            if i > 0 {
                f.write_str(" && ")?;
            }
            write!(f, "{p}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_all_predicate_forms() {
        let text = r#"
            # leading comment
            r1 := proto == "tcp" && "Dst Port" in [0, 1024.5]   # trailing
            r2 := tokens ~ [5, 6,7]
        "#;
        let rules = parse_rules(text).unwrap();
        assert_eq!(rules.len(), 2);
        assert_eq!(
            rules[0].predicates,
            vec![
                Predicate::Equals { column: "proto".into(), value: "tcp".into() },
                Predicate::InRange { column: "Dst Port".into(), lo: 0.0, hi: 1024.5 },
            ]
        );
        assert_eq!(rules[1].predicates, vec![Predicate::Tokens(vec![5, 6, 7])]);
    }

    #[test]
    fn reports_line_numbers() {
        let err = parse_rules("ok := a == \"x\"\n\nbad := a ==").unwrap_err();
        assert!(matches!(err, SignatureError::Parse { line: 3, .. }), "{err:?}");
        assert!(parse_rules("r := ").is_err());
        assert!(parse_rules("r := a in [1 2]").is_err());
        assert!(parse_rules("r := a == \"x\" b == \"y\"").is_err());
        assert!(parse_rules("r := tokens ~ []").is_err());
    }

    #[test]
    fn escapes_in_strings() {
        let rules = parse_rules(r#"r := "we\"ird" == "a\\b""#).unwrap();
        assert_eq!(
            rules[0].predicates[0],
            Predicate::Equals { column: "we\"ird".into(), value: "a\\b".into() }
        );
    }

    fn predicate_strategy() -> impl Strategy<Value = Predicate> {
        let column = "[A-Za-z_][A-Za-z0-9 _\"]{0,8}";
        prop_oneof![
            (column, ".{0,8}").prop_map(|(c, v)| Predicate::Equals { column: c, value: v }),
            (column, -1e6f64..1e6, 0f64..1e6)
                .prop_map(|(c, lo, w)| Predicate::InRange { column: c, lo, hi: lo + w }),
            prop::collection::vec(0u32..500, 1..6).prop_map(Predicate::Tokens),
        ]
    }

    proptest! {
        #[test]
        fn display_then_parse_is_identity(
            id in "[a-z_][a-z0-9_]{0,10}",
            preds in prop::collection::vec(predicate_strategy(), 1..4),
        ) {
            prop_assume!(!preds.iter().any(|p| matches!(p, Predicate::Equals { value, .. } if value.contains(['\n', '\r']))));
            let rule = SignatureRule { id, predicates: preds };
            let parsed = parse_rules(&rule.to_string()).unwrap();
            prop_assert_eq!(parsed, vec![rule]);
        }
    }
}
