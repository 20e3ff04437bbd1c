//! A deliberately small SQL dump reader.
//!
//! Accepted statements:
//!
//! ```text
//! create_stmt := CREATE TABLE [IF NOT EXISTS] name "(" coldef ("," coldef)* ("," tablecon)* ")" [options] ";"
//! tablecon    := [CONSTRAINT name] PRIMARY KEY "(" names ")"
//!              | [CONSTRAINT name] FOREIGN KEY "(" names ")" REFERENCES name ["(" names ")"] [ON ... action]*
//!              | UNIQUE ... | KEY ... | INDEX ... | CHECK (...)          -- parsed and ignored
//! insert_stmt := INSERT INTO name ["(" names ")"] VALUES tuple ("," tuple)* ";"
//! ```
//!
//! `SET` and `USE` statements are skipped, as are `--`, `#` and `/* */`
//! comments (MySQL `/*! ... */` included). Keywords are case-insensitive,
//! identifiers may be quoted with backticks or double quotes, and strings are
//! single-quoted with `''` as the only escape. Trailing table options such as
//! `ENGINE=InnoDB` or `AUTO_INCREMENT=5` are ignored.

use std::collections::HashMap;

use super::{
    check_unique_key, parse_date, sanitize_identifier, Column, DataType, Error, ForeignKey,
    RelationalDatabase, Result, Row, ScalarValue, Table,
};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Quoted(String),
    Number(String),
    Str(String),
    Punct(char),
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Word(w) => format!("`{w}`"),
            Tok::Quoted(w) => format!("identifier `{w}`"),
            Tok::Number(n) => format!("number {n}"),
            Tok::Str(s) => format!("string '{s}'"),
            Tok::Punct(c) => format!("`{c}`"),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: usize,
    column: usize,
}

impl<'a> Lexer<'a> {
    fn new(text: &'a str) -> Self {
        Lexer {
            chars: text.chars().peekable(),
            line: 1,
            column: 1,
        }
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn error(&self, expected: &str, found: &str) -> Error {
        Error::Parse {
            line: self.line,
            column: self.column,
            expected: expected.into(),
            found: found.into(),
        }
    }

    fn tokens(mut self) -> Result<Vec<Token>> {
        let mut out = Vec::new();
        loop {
            let (line, column) = (self.line, self.column);
            let Some(&c) = self.chars.peek() else {
                out.push(Token {
                    tok: Tok::Eof,
                    line,
                    column,
                });
                return Ok(out);
            };
            let tok = match c {
                c if c.is_whitespace() => {
                    self.bump();
                    continue;
                }
                '#' => {
                    self.skip_line();
                    continue;
                }
                '-' => {
                    self.bump();
                    if self.chars.peek() == Some(&'-') {
                        self.skip_line();
                        continue;
                    }
                    Tok::Punct('-')
                }
                '/' => {
                    self.bump();
                    if self.chars.peek() != Some(&'*') {
                        Tok::Punct('/')
                    } else {
                        self.bump();
                        self.skip_block_comment()?;
                        continue;
                    }
                }
                '\'' => {
                    self.bump();
                    Tok::Str(self.delimited('\'', "closing quote")?)
                }
                '`' | '"' => {
                    self.bump();
                    Tok::Quoted(self.delimited(c, "closing identifier quote")?)
                }
                c if c.is_ascii_digit() || c == '.' => self.number(),
                c if c.is_alphabetic() || c == '_' => {
                    let mut word = String::new();
                    while let Some(&c) = self.chars.peek() {
                        if c.is_alphanumeric() || c == '_' || c == '$' {
                            word.push(c);
                            self.bump();
                        } else {
                            break;
                        }
                    }
                    Tok::Word(word)
                }
                c => {
                    self.bump();
                    Tok::Punct(c)
                }
            };
            out.push(Token { tok, line, column });
        }
    }

    fn skip_line(&mut self) {
        while let Some(c) = self.bump() {
            if c == '\n' {
                break;
            }
        }
    }

    fn skip_block_comment(&mut self) -> Result<()> {
        let mut star = false;
        while let Some(c) = self.bump() {
            if star && c == '/' {
                return Ok(());
            }
            star = c == '*';
        }
        Err(self.error("`*/`", "end of input"))
    }

    fn delimited(&mut self, quote: char, expected: &str) -> Result<String> {
        let mut s = String::new();
        loop {
            match self.bump() {
                None => return Err(self.error(expected, "end of input")),
                Some(c) if c == quote => {
                    if self.chars.peek() == Some(&quote) {
                        self.bump();
                        s.push(quote);
                    } else {
                        return Ok(s);
                    }
                }
                Some(c) => s.push(c),
            }
        }
    }

    fn number(&mut self) -> Tok {
        let mut s = String::new();
        let mut seen_exp = false;
        while let Some(&c) = self.chars.peek() {
            let accept = c.is_ascii_digit()
                || c == '.'
                || (!seen_exp && (c == 'e' || c == 'E'))
                || ((c == '+' || c == '-') && matches!(s.chars().last(), Some('e' | 'E')));
            if !accept {
                break;
            }
            if c == 'e' || c == 'E' {
                seen_exp = true;
            }
            s.push(c);
            self.bump();
        }
        if s == "." {
            Tok::Punct('.')
        } else {
            Tok::Number(s)
        }
    }
}

enum Literal {
    Null,
    Bool(bool),
    Number(String),
    Str(String),
    Date(String),
}

struct PendingFk {
    columns: Vec<String>,
    ref_table: String,
    ref_columns: Option<Vec<String>>,
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    db_name: String,
    tables: Vec<Table>,
    pending_fks: Vec<Vec<PendingFk>>,
    keys: Vec<HashMap<String, usize>>,
}

/// Parses a SQL dump into a database named `db_name`.
pub fn parse_sql_dump(text: &str, db_name: &str) -> Result<RelationalDatabase> {
    let mut parser = Parser {
        tokens: Lexer::new(text).tokens()?,
        pos: 0,
        db_name: sanitize_identifier(db_name),
        tables: Vec::new(),
        pending_fks: Vec::new(),
        keys: Vec::new(),
    };
    parser.statements()?;
    parser.finish()
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn next(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if t.tok != Tok::Eof {
            self.pos += 1;
        }
        t
    }

    fn error_at(&self, token: &Token, expected: &str) -> Error {
        Error::Parse {
            line: token.line,
            column: token.column,
            expected: expected.into(),
            found: token.tok.describe(),
        }
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(&self.peek().tok, Tok::Word(w) if w.eq_ignore_ascii_case(kw))
    }

    fn eat_keyword(&mut self, kw: &str) -> bool {
        if self.is_keyword(kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<()> {
        if self.eat_keyword(kw) {
            Ok(())
        } else {
            Err(self.error_at(self.peek(), kw))
        }
    }

    fn eat_punct(&mut self, c: char) -> bool {
        if self.peek().tok == Tok::Punct(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, c: char) -> Result<()> {
        if self.eat_punct(c) {
            Ok(())
        } else {
            Err(self.error_at(self.peek(), &format!("`{c}`")))
        }
    }

    fn identifier(&mut self) -> Result<String> {
        let token = self.next();
        match token.tok {
            Tok::Word(w) | Tok::Quoted(w) => Ok(w),
            _ => Err(self.error_at(&token, "identifier")),
        }
    }

    /// A possibly schema-qualified name; only the last part is kept.
    fn object_name(&mut self) -> Result<String> {
        let mut name = self.identifier()?;
        while self.eat_punct('.') {
            name = self.identifier()?;
        }
        Ok(sanitize_identifier(&name))
    }

    fn name_list(&mut self) -> Result<Vec<String>> {
        self.expect_punct('(')?;
        let mut names = Vec::new();
        loop {
            names.push(sanitize_identifier(&self.identifier()?));
            // MySQL index prefix lengths, e.g. `name(10)`
            if self.peek().tok == Tok::Punct('(') {
                self.skip_parens()?;
            }
            if self.eat_punct(')') {
                return Ok(names);
            }
            self.expect_punct(',')?;
        }
    }

    fn skip_parens(&mut self) -> Result<()> {
        self.expect_punct('(')?;
        let mut depth = 1;
        while depth > 0 {
            let token = self.next();
            match token.tok {
                Tok::Punct('(') => depth += 1,
                Tok::Punct(')') => depth -= 1,
                Tok::Eof => return Err(self.error_at(&token, "`)`")),
                _ => {}
            }
        }
        Ok(())
    }

    fn skip_to_semicolon(&mut self) -> Result<()> {
        loop {
            let token = self.next();
            match token.tok {
                Tok::Punct(';') => return Ok(()),
                Tok::Eof => return Err(self.error_at(&token, "`;`")),
                _ => {}
            }
        }
    }

    fn statements(&mut self) -> Result<()> {
        loop {
            let token = self.peek().clone();
            match &token.tok {
                Tok::Eof => return Ok(()),
                Tok::Punct(';') => {
                    self.pos += 1;
                }
                Tok::Word(w) => {
                    let kw = w.to_ascii_uppercase();
                    self.pos += 1;
                    match kw.as_str() {
                        "CREATE" => {
                            if self.eat_keyword("TABLE") {
                                self.create_table()?;
                            } else {
                                let what = match &self.peek().tok {
                                    Tok::Word(w) => format!("CREATE {}", w.to_ascii_uppercase()),
                                    _ => "CREATE".into(),
                                };
                                return Err(Error::UnsupportedStatement {
                                    line: token.line,
                                    kind: what,
                                });
                            }
                        }
                        "INSERT" => self.insert()?,
                        "SET" | "USE" => self.skip_to_semicolon()?,
                        _ => {
                            return Err(Error::UnsupportedStatement {
                                line: token.line,
                                kind: kw,
                            })
                        }
                    }
                }
                _ => return Err(self.error_at(&token, "statement")),
            }
        }
    }

    fn violation(&self, line: usize, message: String) -> Error {
        Error::InvariantViolation {
            location: format!("{} line {line}", self.db_name),
            message,
        }
    }

    fn create_table(&mut self) -> Result<()> {
        let start = self.tokens[self.pos - 1].line;
        if self.eat_keyword("IF") {
            self.expect_keyword("NOT")?;
            self.expect_keyword("EXISTS")?;
        }
        let name = self.object_name()?;
        if self.tables.iter().any(|t| t.name == name) {
            return Err(self.violation(start, format!("table {name} created twice")));
        }
        self.expect_punct('(')?;
        let mut columns = Vec::new();
        let mut primary_key: Option<Vec<String>> = None;
        let mut fks = Vec::new();
        loop {
            let item_line = self.peek().line;
            let mut set_pk = |pk: Vec<String>, parser: &Parser| -> Result<()> {
                if primary_key.replace(pk).is_some() {
                    return Err(parser.violation(item_line, format!("table {name} has two primary keys")));
                }
                Ok(())
            };
            if self.eat_keyword("CONSTRAINT")
                && !(self.is_keyword("PRIMARY")
                    || self.is_keyword("FOREIGN")
                    || self.is_keyword("UNIQUE")
                    || self.is_keyword("CHECK"))
            {
                self.identifier()?;
            }
            if self.eat_keyword("PRIMARY") {
                self.expect_keyword("KEY")?;
                let pk = self.name_list()?;
                set_pk(pk, self)?;
            } else if self.eat_keyword("FOREIGN") {
                self.expect_keyword("KEY")?;
                let cols = self.name_list()?;
                fks.push(self.references(cols)?);
            } else if self.eat_keyword("UNIQUE") {
                let _ = self.eat_keyword("KEY") || self.eat_keyword("INDEX");
                if self.peek().tok != Tok::Punct('(') {
                    self.identifier()?;
                }
                self.name_list()?;
            } else if self.eat_keyword("KEY") || self.eat_keyword("INDEX") {
                if self.peek().tok != Tok::Punct('(') {
                    self.identifier()?;
                }
                self.name_list()?;
            } else if self.eat_keyword("CHECK") {
                self.skip_parens()?;
            } else {
                let (column, inline_pk, inline_fk) = self.column_def()?;
                if inline_pk {
                    set_pk(vec![column.name.clone()], self)?;
                }
                if let Some(fk) = inline_fk {
                    fks.push(fk);
                }
                columns.push(column);
            }
            if self.eat_punct(')') {
                break;
            }
            self.expect_punct(',')?;
        }
        self.skip_to_semicolon()?;

        let primary_key = primary_key.unwrap_or_default();
        for col in columns.iter_mut() {
            if primary_key.contains(&col.name) {
                col.nullable = false;
            }
        }
        self.tables.push(Table {
            name,
            columns,
            primary_key,
            foreign_keys: Vec::new(),
            rows: Vec::new(),
        });
        self.pending_fks.push(fks);
        self.keys.push(HashMap::new());
        Ok(())
    }

    fn references(&mut self, columns: Vec<String>) -> Result<PendingFk> {
        self.expect_keyword("REFERENCES")?;
        let ref_table = self.object_name()?;
        let ref_columns = if self.peek().tok == Tok::Punct('(') {
            Some(self.name_list()?)
        } else {
            None
        };
        while self.eat_keyword("ON") {
            if !(self.eat_keyword("DELETE") || self.eat_keyword("UPDATE")) {
                return Err(self.error_at(self.peek(), "DELETE or UPDATE"));
            }
            if self.eat_keyword("SET") {
                if !(self.eat_keyword("NULL") || self.eat_keyword("DEFAULT")) {
                    return Err(self.error_at(self.peek(), "NULL or DEFAULT"));
                }
            } else if self.eat_keyword("NO") {
                self.expect_keyword("ACTION")?;
            } else if !(self.eat_keyword("CASCADE") || self.eat_keyword("RESTRICT")) {
                return Err(self.error_at(self.peek(), "referential action"));
            }
        }
        Ok(PendingFk {
            columns,
            ref_table,
            ref_columns,
        })
    }

    fn column_type(&mut self) -> Result<(DataType, bool)> {
        let token = self.next();
        let Tok::Word(word) = &token.tok else {
            return Err(self.error_at(&token, "column type"));
        };
        let mut implied_not_null = false;
        let data_type = match word.to_ascii_uppercase().as_str() {
            "INT" | "INTEGER" | "BIGINT" | "SMALLINT" | "TINYINT" | "MEDIUMINT" | "INT2"
            | "INT4" | "INT8" => DataType::Integer,
            "SERIAL" | "BIGSERIAL" | "SMALLSERIAL" => {
                implied_not_null = true;
                DataType::Integer
            }
            "REAL" | "FLOAT" | "FLOAT4" | "FLOAT8" | "DECIMAL" | "NUMERIC" | "DEC" => DataType::Real,
            "DOUBLE" => {
                self.eat_keyword("PRECISION");
                DataType::Real
            }
            "TEXT" | "VARCHAR" | "CHAR" | "NCHAR" | "NVARCHAR" | "TINYTEXT" | "MEDIUMTEXT"
            | "LONGTEXT" | "STRING" => DataType::Text,
            "CHARACTER" => {
                self.eat_keyword("VARYING");
                DataType::Text
            }
            "BOOLEAN" | "BOOL" => DataType::Boolean,
            "DATE" => DataType::Date,
            _ => return Err(self.error_at(&token, "supported column type")),
        };
        if self.peek().tok == Tok::Punct('(') {
            self.skip_parens()?;
        }
        while self.eat_keyword("UNSIGNED") || self.eat_keyword("SIGNED") || self.eat_keyword("ZEROFILL") {}
        Ok((data_type, implied_not_null))
    }

    fn column_def(&mut self) -> Result<(Column, bool, Option<PendingFk>)> {
        let name = sanitize_identifier(&self.identifier()?);
        let (data_type, implied_not_null) = self.column_type()?;
        let mut nullable = !implied_not_null;
        let mut pk = false;
        let mut fk = None;
        loop {
            if matches!(self.peek().tok, Tok::Punct(',') | Tok::Punct(')')) {
                break;
            }
            if self.eat_keyword("NOT") {
                self.expect_keyword("NULL")?;
                nullable = false;
            } else if self.eat_keyword("NULL") {
            } else if self.eat_keyword("PRIMARY") {
                self.expect_keyword("KEY")?;
                pk = true;
            } else if self.eat_keyword("UNIQUE") {
                self.eat_keyword("KEY");
            } else if self.eat_keyword("DEFAULT") {
                self.default_value()?;
            } else if self.eat_keyword("AUTO_INCREMENT") || self.eat_keyword("AUTOINCREMENT") {
            } else if self.eat_keyword("COMMENT") {
                let token = self.next();
                if !matches!(token.tok, Tok::Str(_)) {
                    return Err(self.error_at(&token, "comment string"));
                }
            } else if self.eat_keyword("COLLATE") {
                self.identifier()?;
            } else if self.eat_keyword("CHARACTER") {
                self.expect_keyword("SET")?;
                self.identifier()?;
            } else if self.eat_keyword("CHECK") {
                self.skip_parens()?;
            } else if self.is_keyword("REFERENCES") {
                fk = Some(self.references(vec![name.clone()])?);
            } else {
                return Err(self.error_at(self.peek(), "column constraint, `,` or `)`"));
            }
        }
        Ok((
            Column {
                name,
                data_type,
                nullable,
            },
            pk,
            fk,
        ))
    }

    fn default_value(&mut self) -> Result<()> {
        self.eat_punct('-');
        let token = self.next();
        match token.tok {
            Tok::Number(_) | Tok::Str(_) => Ok(()),
            Tok::Word(_) => {
                // NULL, CURRENT_TIMESTAMP, now() and similar
                if self.peek().tok == Tok::Punct('(') {
                    self.skip_parens()?;
                }
                Ok(())
            }
            Tok::Punct('(') => {
                self.pos -= 1;
                self.skip_parens()
            }
            _ => Err(self.error_at(&token, "default value")),
        }
    }

    fn literal(&mut self) -> Result<Literal> {
        let token = self.next();
        Ok(match token.tok {
            Tok::Word(w) if w.eq_ignore_ascii_case("NULL") => Literal::Null,
            Tok::Word(w) if w.eq_ignore_ascii_case("TRUE") => Literal::Bool(true),
            Tok::Word(w) if w.eq_ignore_ascii_case("FALSE") => Literal::Bool(false),
            Tok::Word(w) if w.eq_ignore_ascii_case("DATE") => {
                let next = self.next();
                match next.tok {
                    Tok::Str(s) => Literal::Date(s),
                    _ => return Err(self.error_at(&next, "date string")),
                }
            }
            Tok::Number(n) => Literal::Number(n),
            Tok::Punct(sign @ ('-' | '+')) => {
                let next = self.next();
                match next.tok {
                    Tok::Number(n) if sign == '-' => Literal::Number(format!("-{n}")),
                    Tok::Number(n) => Literal::Number(n),
                    _ => return Err(self.error_at(&next, "number")),
                }
            }
            Tok::Str(s) => Literal::Str(s),
            _ => return Err(self.error_at(&token, "literal value")),
        })
    }

    fn insert(&mut self) -> Result<()> {
        self.eat_keyword("IGNORE");
        self.expect_keyword("INTO")?;
        let name_token = self.peek().clone();
        let name = self.object_name()?;
        let table_idx = self
            .tables
            .iter()
            .position(|t| t.name == name)
            .ok_or_else(|| self.violation(name_token.line, format!("insert into unknown table {name}")))?;
        let targets: Vec<usize> = if self.peek().tok == Tok::Punct('(') {
            let names = self.name_list()?;
            let table = &self.tables[table_idx];
            names
                .iter()
                .map(|n| {
                    table.column_index(n).ok_or_else(|| {
                        self.violation(name_token.line, format!("unknown column {name}.{n}"))
                    })
                })
                .collect::<Result<_>>()?
        } else {
            (0..self.tables[table_idx].columns.len()).collect()
        };
        if !(self.eat_keyword("VALUES") || self.eat_keyword("VALUE")) {
            return Err(self.error_at(self.peek(), "VALUES"));
        }
        loop {
            let line = self.peek().line;
            self.expect_punct('(')?;
            let mut literals = Vec::new();
            if !self.eat_punct(')') {
                loop {
                    literals.push(self.literal()?);
                    if self.eat_punct(')') {
                        break;
                    }
                    self.expect_punct(',')?;
                }
            }
            self.add_row(table_idx, &targets, literals, line)?;
            if !self.eat_punct(',') {
                break;
            }
        }
        if !self.eat_punct(';') {
            return Err(self.error_at(self.peek(), "`;`"));
        }
        Ok(())
    }

    fn add_row(&mut self, table_idx: usize, targets: &[usize], literals: Vec<Literal>, line: usize) -> Result<()> {
        let table = &self.tables[table_idx];
        if literals.len() != targets.len() {
            return Err(self.violation(
                line,
                format!("{} values for {} columns of {}", literals.len(), targets.len(), table.name),
            ));
        }
        let mut values = vec![ScalarValue::Null; table.columns.len()];
        for (&idx, lit) in targets.iter().zip(literals) {
            let col = &table.columns[idx];
            values[idx] = coerce(lit, col.data_type).map_err(|m| {
                self.violation(line, format!("column {}.{}: {m}", table.name, col.name))
            })?;
        }
        let row = Row { values };
        let check = table
            .check_row(&row)
            .and_then(|_| check_unique_key(table, &row, table.rows.len(), &mut self.keys[table_idx]));
        if let Err(m) = check {
            return Err(self.violation(line, format!("table {}: {m}", table.name)));
        }
        self.tables[table_idx].rows.push(row);
        Ok(())
    }

    fn finish(mut self) -> Result<RelationalDatabase> {
        for (i, fks) in std::mem::take(&mut self.pending_fks).into_iter().enumerate() {
            let mut resolved = Vec::new();
            for fk in fks {
                let ref_columns = match fk.ref_columns {
                    Some(cols) => cols,
                    None => self
                        .tables
                        .iter()
                        .find(|t| t.name == fk.ref_table)
                        .map(|t| t.primary_key.clone())
                        .unwrap_or_default(),
                };
                resolved.push(ForeignKey {
                    columns: fk.columns,
                    ref_table: fk.ref_table,
                    ref_columns,
                });
            }
            self.tables[i].foreign_keys = resolved;
        }
        let db = RelationalDatabase {
            name: self.db_name,
            tables: self.tables,
        };
        db.check_schema()?;
        Ok(db)
    }
}

fn coerce(lit: Literal, data_type: DataType) -> std::result::Result<ScalarValue, String> {
    Ok(match (data_type, lit) {
        (_, Literal::Null) => ScalarValue::Null,
        (DataType::Text, Literal::Str(s)) => ScalarValue::Text(s),
        (DataType::Integer, Literal::Number(n)) => ScalarValue::Integer(
            n.parse().map_err(|_| format!("{n} is not an integer"))?,
        ),
        (DataType::Real, Literal::Number(n)) => {
            let r: f64 = n.parse().map_err(|_| format!("{n} is not a number"))?;
            if !r.is_finite() {
                return Err(format!("{n} is out of range"));
            }
            ScalarValue::Real(r)
        }
        (DataType::Boolean, Literal::Bool(b)) => ScalarValue::Boolean(b),
        (DataType::Boolean, Literal::Number(n)) if n == "0" || n == "1" => {
            ScalarValue::Boolean(n == "1")
        }
        (DataType::Date, Literal::Str(s) | Literal::Date(s)) => {
            ScalarValue::Date(parse_date(&s).ok_or_else(|| format!("'{s}' is not a YYYY-MM-DD date"))?)
        }
        (t, Literal::Str(s)) => return Err(format!("string '{s}' in {t} column")),
        (t, Literal::Number(n)) => return Err(format!("number {n} in {t} column")),
        (t, Literal::Bool(b)) => return Err(format!("boolean {b} in {t} column")),
        (t, Literal::Date(s)) => return Err(format!("date '{s}' in {t} column")),
    })
}
