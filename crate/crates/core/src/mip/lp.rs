//! Reading and writing the CPLEX LP text format (the subset this crate emits:
//! one objective, linear rows, bounds, binary and general sections).

use std::fmt::Write as _;

use crate::error::{Error, Result};

use super::model::{MipModel, Row, RowSense};

const TERMS_PER_LINE: usize = 8;

fn number(x: f64) -> String {
    if x == 0.0 {
        "0".into()
    } else if x == f64::INFINITY {
        "inf".into()
    } else if x == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{x}")
    }
}

fn write_terms(out: &mut String, terms: &[(usize, f64)], model: &MipModel) {
    if terms.is_empty() {
        out.push_str(" 0");
        return;
    }
    for (k, &(v, c)) in terms.iter().enumerate() {
        if k > 0 && k % TERMS_PER_LINE == 0 {
            out.push_str("\n   ");
        }
        let sign = if c < 0.0 { '-' } else { '+' };
        let name = &model.variables[v].name;
        if c.abs() == 1.0 {
            let _ = write!(out, " {sign} {name}");
        } else {
            let _ = write!(out, " {sign} {} {name}", number(c.abs()));
        }
    }
}

/// Renders `model` as LP text.
pub fn write_lp(model: &MipModel, comment: &str) -> String {
    let mut out = String::new();
    for line in comment.lines() {
        let _ = writeln!(out, "\\ {line}");
    }
    out.push_str(if model.minimize { "Minimize\n" } else { "Maximize\n" });
    out.push_str(" obj:");
    write_terms(&mut out, &model.objective, model);
    out.push_str("\nSubject To\n");
    for row in &model.rows {
        let _ = write!(out, " {}:", row.name);
        write_terms(&mut out, &row.terms, model);
        let _ = writeln!(out, " {} {}", row.sense, number(row.rhs));
    }
    let bounded: Vec<_> = model
        .variables
        .iter()
        .filter(|v| v.lower != 0.0 || v.upper != if v.binary { 1.0 } else { f64::INFINITY })
        .collect();
    if !bounded.is_empty() {
        out.push_str("Bounds\n");
        for v in bounded {
            if v.lower == v.upper {
                let _ = writeln!(out, " {} = {}", v.name, number(v.lower));
            } else {
                let _ = writeln!(out, " {} <= {} <= {}", number(v.lower), v.name, number(v.upper));
            }
        }
    }
    let binaries: Vec<&str> = model.variables.iter().filter(|v| v.binary).map(|v| v.name.as_str()).collect();
    if !binaries.is_empty() {
        out.push_str("Binaries\n");
        for chunk in binaries.chunks(TERMS_PER_LINE) {
            let _ = writeln!(out, " {}", chunk.join(" "));
        }
    }
    out.push_str("End\n");
    out
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Name(String),
    Label(String),
    Number(f64),
    Sign(f64),
    Sense(RowSense),
}

fn tokenize(text: &str, line_no: usize) -> Result<Vec<Token>> {
    let err = |m: String| Error::parse(format!("LP line {line_no}"), m);
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c == '<' || c == '>' || c == '=' {
            let mut j = i + 1;
            if j < chars.len() && matches!(chars[j], '<' | '>' | '=') {
                j += 1;
            }
            let op: String = chars[i..j].iter().collect();
            let sense = match op.as_str() {
                "<=" | "=<" | "<" => RowSense::Le,
                ">=" | "=>" | ">" => RowSense::Ge,
                "=" => RowSense::Eq,
                _ => return Err(err(format!("bad operator `{op}`"))),
            };
            tokens.push(Token::Sense(sense));
            i = j;
        } else if c == '+' || c == '-' {
            tokens.push(Token::Sign(if c == '-' { -1.0 } else { 1.0 }));
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && matches!(chars[i], 'e' | 'E') {
                let mut j = i + 1;
                if j < chars.len() && matches!(chars[j], '+' | '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let s: String = chars[start..i].iter().collect();
            tokens.push(Token::Number(s.parse().map_err(|_| err(format!("bad number `{s}`")))?));
        } else {
            let start = i;
            while i < chars.len() && !chars[i].is_whitespace() && !matches!(chars[i], '+' | '-' | '<' | '>' | '=' | ':')
            {
                i += 1;
            }
            let s: String = chars[start..i].iter().collect();
            if i < chars.len() && chars[i] == ':' {
                tokens.push(Token::Label(s));
                i += 1;
            } else if s.eq_ignore_ascii_case("inf") || s.eq_ignore_ascii_case("infinity") {
                tokens.push(Token::Number(f64::INFINITY));
            } else {
                tokens.push(Token::Name(s));
            }
        }
    }
    Ok(tokens)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    Preamble,
    Objective,
    Constraints,
    Bounds,
    Binaries,
    Generals,
    End,
}

fn section_header(line: &str) -> Option<(Section, Option<bool>)> {
    let lower = line.trim().to_ascii_lowercase();
    let squashed: String = lower.split_whitespace().collect::<Vec<_>>().join(" ");
    Some(match squashed.as_str() {
        "maximize" | "maximise" | "maximum" | "max" => (Section::Objective, Some(false)),
        "minimize" | "minimise" | "minimum" | "min" => (Section::Objective, Some(true)),
        "subject to" | "such that" | "st" | "s.t." => (Section::Constraints, None),
        "bounds" | "bound" => (Section::Bounds, None),
        "binaries" | "binary" | "bin" => (Section::Binaries, None),
        "generals" | "general" | "gen" => (Section::Generals, None),
        "end" => (Section::End, None),
        _ => return None,
    })
}

/// Linear expression parser over a token stream: `[label:] (sign? number? name)*`.
struct Cursor {
    tokens: Vec<Token>,
    pos: usize,
}

impl Cursor {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn expression(&mut self, model: &mut MipModel) -> Result<Vec<(usize, f64)>> {
        let mut terms: Vec<(usize, f64)> = Vec::new();
        loop {
            let mut coef = 1.0;
            let mut seen = false;
            while let Some(Token::Sign(s)) = self.peek() {
                coef *= s;
                self.pos += 1;
                seen = true;
            }
            if let Some(Token::Number(x)) = self.peek() {
                let x = *x;
                if matches!(self.tokens.get(self.pos + 1), Some(Token::Name(_))) {
                    coef *= x;
                    self.pos += 1;
                } else if x == 0.0 && !matches!(self.tokens.get(self.pos + 1), Some(Token::Sense(_))) {
                    self.pos += 1;
                    continue;
                } else if x == 0.0 {
                    self.pos += 1;
                    return Ok(terms);
                } else {
                    return Err(Error::parse("LP", "constant terms are not supported"));
                }
            }
            match self.peek() {
                Some(Token::Name(name)) => {
                    let v = model.var_or_add(&name.clone());
                    self.pos += 1;
                    match terms.iter_mut().find(|(u, _)| *u == v) {
                        Some(t) => t.1 += coef,
                        None => terms.push((v, coef)),
                    }
                }
                _ if seen => return Err(Error::parse("LP", "sign without a term")),
                _ => return Ok(terms),
            }
        }
    }
}

fn signed_number(c: &mut Cursor, context: &str) -> Result<f64> {
    let mut sign = 1.0;
    while let Some(Token::Sign(s)) = c.peek() {
        sign *= s;
        c.pos += 1;
    }
    match c.next() {
        Some(Token::Number(x)) => Ok(sign * x),
        other => Err(Error::parse("LP", format!("expected a number in {context}, found {other:?}"))),
    }
}

/// Parses LP text produced by [`write_lp`] or by common solvers restricted to
/// the same subset. Variables are ordered as they are first declared in the
/// binary and general sections, then by first use.
pub fn read_lp(text: &str) -> Result<MipModel> {
    let mut sections: Vec<(Section, usize, String)> = Vec::new();
    let mut current = Section::Preamble;
    let mut minimize = false;
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('\\').next().unwrap_or("");
        if let Some((s, min)) = section_header(line) {
            current = s;
            if let Some(m) = min {
                minimize = m;
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        if current == Section::Preamble {
            return Err(Error::parse(format!("LP line {}", k + 1), "content before the objective section"));
        }
        if current == Section::End {
            return Err(Error::parse(format!("LP line {}", k + 1), "content after End"));
        }
        sections.push((current, k + 1, line.to_string()));
    }

    let mut model = MipModel::new();
    model.minimize = minimize;
    for (s, line_no, line) in &sections {
        if matches!(s, Section::Binaries | Section::Generals) {
            for tok in tokenize(line, *line_no)? {
                let Token::Name(name) = tok else {
                    return Err(Error::parse(format!("LP line {line_no}"), "expected variable names"));
                };
                let v = model.var_or_add(&name);
                let var = &mut model.variables[v];
                if *s == Section::Binaries {
                    var.binary = true;
                    var.upper = 1.0;
                }
            }
        }
    }

    let gather = |which: Section| -> Result<Vec<Token>> {
        let mut all = Vec::new();
        for (s, line_no, line) in &sections {
            if *s == which {
                all.extend(tokenize(line, *line_no)?);
            }
        }
        Ok(all)
    };

    let mut obj = Cursor { tokens: gather(Section::Objective)?, pos: 0 };
    if let Some(Token::Label(_)) = obj.peek() {
        obj.pos += 1;
    }
    model.objective = obj.expression(&mut model)?;
    if obj.pos < obj.tokens.len() {
        return Err(Error::parse("LP objective", "unexpected trailing tokens"));
    }

    let mut rows = Cursor { tokens: gather(Section::Constraints)?, pos: 0 };
    while rows.peek().is_some() {
        let name = match rows.peek() {
            Some(Token::Label(l)) => {
                let l = l.clone();
                rows.pos += 1;
                l
            }
            _ => format!("r_{}", model.rows.len() + 1),
        };
        let terms = rows.expression(&mut model)?;
        let sense = match rows.next() {
            Some(Token::Sense(s)) => s,
            other => return Err(Error::parse(format!("LP row {name}"), format!("expected a sense, found {other:?}"))),
        };
        let rhs = signed_number(&mut rows, &format!("row {name}"))?;
        model.rows.push(Row { name, terms, sense, rhs });
    }

    for (s, line_no, line) in &sections {
        if *s != Section::Bounds {
            continue;
        }
        let err = |m: &str| Error::parse(format!("LP line {line_no}"), m.to_string());
        let tokens = tokenize(line, *line_no)?;
        let mut c = Cursor { tokens, pos: 0 };
        let find_name = |c: &Cursor| c.tokens.iter().position(|t| matches!(t, Token::Name(_)));
        let Some(at) = find_name(&c) else {
            return Err(err("bound without a variable"));
        };
        let Token::Name(name) = c.tokens[at].clone() else { unreachable!() };
        if c.tokens.len() == 2 && at == 0 {
            if let Token::Name(word) = &c.tokens[1] {
                if word.eq_ignore_ascii_case("free") {
                    let v = model.var_or_add(&name);
                    model.variables[v].lower = f64::NEG_INFINITY;
                    model.variables[v].upper = f64::INFINITY;
                    continue;
                }
            }
        }
        let v = model.var_or_add(&name);
        let mut apply = |sense: RowSense, value: f64, var_on_left: bool| {
            let var = &mut model.variables[v];
            let sense = match (sense, var_on_left) {
                (RowSense::Le, false) => RowSense::Ge,
                (RowSense::Ge, false) => RowSense::Le,
                (s, _) => s,
            };
            match sense {
                RowSense::Le => var.upper = value,
                RowSense::Ge => var.lower = value,
                RowSense::Eq => {
                    var.lower = value;
                    var.upper = value;
                }
            }
        };
        if at > 0 {
            let value = signed_number(&mut c, "bound")?;
            let Some(Token::Sense(s)) = c.next() else {
                return Err(err("expected a sense before the variable"));
            };
            apply(s, value, false);
        }
        c.pos = at + 1;
        if c.peek().is_some() {
            let Some(Token::Sense(s)) = c.next() else {
                return Err(err("expected a sense after the variable"));
            };
            let value = signed_number(&mut c, "bound")?;
            apply(s, value, true);
        }
        if c.peek().is_some() {
            return Err(err("unexpected trailing tokens"));
        }
    }
    for v in &model.variables {
        if v.lower > v.upper {
            return Err(Error::parse("LP bounds", format!("empty domain for `{}`", v.name)));
        }
    }
    Ok(model)
}
