//! A small XML tree for the restricted envelope grammar.
//!
//! The tokenizer accepts well-formed element/attribute/text documents and
//! rejects anything else. Comments, processing instructions, CDATA and
//! doctype declarations are reported as [`XmlErrorKind::Unsupported`] so the
//! envelope layer can surface them as schema violations rather than
//! well-formedness failures. Parsing is iterative so deeply nested input
//! cannot exhaust the stack.

use std::fmt;

pub const DECLARATION: &str = r#"<?xml version="1.0" encoding="UTF-8"?>"#;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Attribute {
    pub name: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Node {
    Element(Element),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Element {
    pub name: String,
    pub attributes: Vec<Attribute>,
    pub children: Vec<Node>,
    /// Byte range of the element in the source document; zero for built trees.
    pub span: (usize, usize),
}

impl Element {
    pub fn new(name: impl Into<String>) -> Self {
        Element {
            name: name.into(),
            attributes: Vec::new(),
            children: Vec::new(),
            span: (0, 0),
        }
    }

    pub fn leaf(name: impl Into<String>, text: impl Into<String>) -> Self {
        let mut el = Element::new(name);
        let text = text.into();
        if !text.is_empty() {
            el.children.push(Node::Text(text));
        }
        el
    }

    pub fn node(name: impl Into<String>, children: Vec<Element>) -> Self {
        let mut el = Element::new(name);
        el.children = children.into_iter().map(Node::Element).collect();
        el
    }

    pub fn with_attribute(mut self, name: impl Into<String>, value: impl Into<String>) -> Self {
        self.attributes.push(Attribute {
            name: name.into(),
            value: value.into(),
        });
        self
    }

    pub fn push(&mut self, child: Element) {
        self.children.push(Node::Element(child));
    }

    pub fn child_elements(&self) -> impl Iterator<Item = &Element> {
        self.children.iter().filter_map(|n| match n {
            Node::Element(e) => Some(e),
            Node::Text(_) => None,
        })
    }

    pub fn has_element_children(&self) -> bool {
        self.children.iter().any(|n| matches!(n, Node::Element(_)))
    }

    /// Concatenated character data of the direct text children.
    pub fn text(&self) -> String {
        let mut out = String::new();
        for n in &self.children {
            if let Node::Text(t) = n {
                out.push_str(t);
            }
        }
        out
    }

    pub fn attribute(&self, name: &str) -> Option<&str> {
        self.attributes
            .iter()
            .find(|a| a.name == name)
            .map(|a| a.value.as_str())
    }

    /// Renders with two-space indentation and a newline after every line.
    pub fn write_pretty(&self, out: &mut String, depth: usize) {
        for _ in 0..depth {
            out.push_str("  ");
        }
        if self.has_element_children() {
            self.write_open(out);
            out.push('\n');
            for child in self.child_elements() {
                child.write_pretty(out, depth + 1);
            }
            for _ in 0..depth {
                out.push_str("  ");
            }
            self.write_close(out);
        } else {
            self.write_open(out);
            escape_text(&self.text(), out);
            self.write_close(out);
        }
        out.push('\n');
    }

    /// Renders on a single line with no whitespace between elements.
    pub fn write_compact(&self, out: &mut String) {
        self.write_open(out);
        if self.has_element_children() {
            for child in self.child_elements() {
                child.write_compact(out);
            }
        } else {
            escape_text(&self.text(), out);
        }
        self.write_close(out);
    }

    pub fn to_compact_string(&self) -> String {
        let mut out = String::new();
        self.write_compact(&mut out);
        out
    }

    fn write_open(&self, out: &mut String) {
        out.push('<');
        out.push_str(&self.name);
        for attr in &self.attributes {
            out.push(' ');
            out.push_str(&attr.name);
            out.push_str("=\"");
            escape_attribute(&attr.value, out);
            out.push('"');
        }
        out.push('>');
    }

    fn write_close(&self, out: &mut String) {
        out.push_str("</");
        out.push_str(&self.name);
        out.push('>');
    }

    /// Path of the deepest element whose span contains `offset`.
    pub fn path_at(&self, offset: usize, prefix: &str) -> Option<String> {
        if offset < self.span.0 || offset >= self.span.1 {
            return None;
        }
        let here = format!("{prefix}/{}", self.name);
        for child in self.child_elements() {
            if let Some(p) = child.path_at(offset, &here) {
                return Some(p);
            }
        }
        Some(here)
    }
}

pub fn escape_text(text: &str, out: &mut String) {
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            _ => out.push(c),
        }
    }
}

fn escape_attribute(text: &str, out: &mut String) {
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '"' => out.push_str("&quot;"),
            _ => out.push(c),
        }
    }
}

/// Characters that may appear in a document at all (XML 1.0 `Char`).
pub fn is_xml_char(c: char) -> bool {
    matches!(c, '\t' | '\n' | '\r' | '\u{20}'..='\u{D7FF}' | '\u{E000}'..='\u{FFFD}' | '\u{10000}'..='\u{10FFFF}')
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XmlErrorKind {
    Malformed,
    Unsupported,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct XmlError {
    pub kind: XmlErrorKind,
    pub offset: usize,
    pub message: String,
    /// Element path open at the point of failure.
    pub path: String,
}

impl fmt::Display for XmlError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at byte {}", self.message, self.offset)
    }
}

impl std::error::Error for XmlError {}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub declaration: Option<String>,
    pub root: Element,
}

pub fn parse(bytes: &[u8]) -> Result<Document, XmlError> {
    let text = std::str::from_utf8(bytes).map_err(|e| XmlError {
        kind: XmlErrorKind::Malformed,
        offset: e.valid_up_to(),
        message: "invalid UTF-8".into(),
        path: String::new(),
    })?;
    Parser { src: text, pos: 0, stack: Vec::new() }.document()
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    stack: Vec<Element>,
}

impl<'a> Parser<'a> {
    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn path(&self) -> String {
        let mut p = String::new();
        for el in &self.stack {
            p.push('/');
            p.push_str(&el.name);
        }
        p
    }

    fn malformed(&self, message: impl Into<String>) -> XmlError {
        XmlError {
            kind: XmlErrorKind::Malformed,
            offset: self.pos,
            message: message.into(),
            path: self.path(),
        }
    }

    fn unsupported(&self, message: impl Into<String>) -> XmlError {
        XmlError {
            kind: XmlErrorKind::Unsupported,
            offset: self.pos,
            message: message.into(),
            path: self.path(),
        }
    }

    fn skip_whitespace(&mut self) {
        let rest = self.rest();
        let trimmed = rest.trim_start_matches([' ', '\t', '\n', '\r']);
        self.pos += rest.len() - trimmed.len();
    }

    fn check_markup(&self) -> Result<(), XmlError> {
        let rest = self.rest();
        if rest.starts_with("<!--") {
            Err(self.unsupported("comments are not part of the envelope grammar"))
        } else if rest.starts_with("<![CDATA[") {
            Err(self.unsupported("CDATA sections are not part of the envelope grammar"))
        } else if rest.starts_with("<!") {
            Err(self.unsupported("markup declarations are not part of the envelope grammar"))
        } else if rest.starts_with("<?") {
            Err(self.unsupported("processing instructions are not part of the envelope grammar"))
        } else {
            Ok(())
        }
    }

    fn document(mut self) -> Result<Document, XmlError> {
        let mut declaration = None;
        if self.rest().starts_with("<?xml") {
            let end = self
                .rest()
                .find("?>")
                .ok_or_else(|| self.malformed("unterminated XML declaration"))?;
            let decl = &self.rest()[..end + 2];
            self.check_declaration(decl)?;
            declaration = Some(decl.to_string());
            self.pos += end + 2;
        }
        self.skip_whitespace();
        if self.rest().is_empty() {
            return Err(self.malformed("missing root element"));
        }
        self.check_markup()?;
        if !self.rest().starts_with('<') {
            return Err(self.malformed("content before root element"));
        }
        let root = self.element()?;
        self.skip_whitespace();
        if !self.rest().is_empty() {
            self.check_markup()?;
            return Err(self.malformed("content after root element"));
        }
        Ok(Document { declaration, root })
    }

    fn check_declaration(&self, decl: &str) -> Result<(), XmlError> {
        let inner = &decl[5..decl.len() - 2];
        if !inner.starts_with([' ', '\t', '\n', '\r']) {
            return Err(self.malformed("malformed XML declaration"));
        }
        let mut sub = Parser { src: inner, pos: 0, stack: Vec::new() };
        let mut names = Vec::new();
        loop {
            sub.skip_whitespace();
            if sub.rest().is_empty() {
                break;
            }
            let (name, _) = sub.attribute().map_err(|_| self.malformed("malformed XML declaration"))?;
            names.push(name);
        }
        let ok = match names.as_slice() {
            [v] => v == "version",
            [v, e] => v == "version" && (e == "encoding" || e == "standalone"),
            [v, e, s] => v == "version" && e == "encoding" && s == "standalone",
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(self.malformed("malformed XML declaration"))
        }
    }

    fn name(&mut self) -> Result<String, XmlError> {
        let rest = self.rest();
        let mut end = 0;
        for (i, c) in rest.char_indices() {
            let ok = if i == 0 {
                c.is_alphabetic() || c == '_' || c == ':'
            } else {
                c.is_alphanumeric() || matches!(c, '_' | ':' | '-' | '.')
            };
            if !ok {
                break;
            }
            end = i + c.len_utf8();
        }
        if end == 0 {
            return Err(self.malformed("expected a name"));
        }
        self.pos += end;
        Ok(rest[..end].to_string())
    }

    fn attribute(&mut self) -> Result<(String, String), XmlError> {
        let name = self.name()?;
        self.skip_whitespace();
        if !self.rest().starts_with('=') {
            return Err(self.malformed("expected '=' after attribute name"));
        }
        self.pos += 1;
        self.skip_whitespace();
        let quote = match self.rest().chars().next() {
            Some(q @ ('"' | '\'')) => q,
            _ => return Err(self.malformed("attribute value must be quoted")),
        };
        self.pos += 1;
        let end = self
            .rest()
            .find(quote)
            .ok_or_else(|| self.malformed("unterminated attribute value"))?;
        let raw = &self.rest()[..end];
        if raw.contains('<') {
            return Err(self.malformed("'<' in attribute value"));
        }
        let value = self.decode(raw)?;
        self.pos += end + 1;
        Ok((name, value))
    }

    /// Parses the start tag at the cursor; returns true when self-closing.
    fn start_tag(&mut self) -> Result<(Element, bool), XmlError> {
        let start = self.pos;
        self.pos += 1;
        let mut el = Element::new(self.name()?);
        el.span.0 = start;
        loop {
            let before = self.pos;
            self.skip_whitespace();
            let rest = self.rest();
            if rest.starts_with("/>") {
                self.pos += 2;
                return Ok((el, true));
            }
            if rest.starts_with('>') {
                self.pos += 1;
                return Ok((el, false));
            }
            if rest.is_empty() {
                return Err(self.malformed("unterminated start tag"));
            }
            if self.pos == before {
                return Err(self.malformed("expected whitespace before attribute"));
            }
            let (name, value) = self.attribute()?;
            if el.attribute(&name).is_some() {
                return Err(self.malformed(format!("duplicate attribute '{name}'")));
            }
            el.attributes.push(Attribute { name, value });
        }
    }

    fn element(&mut self) -> Result<Element, XmlError> {
        let (root, closed) = self.start_tag()?;
        if closed {
            let mut root = root;
            root.span.1 = self.pos;
            return Ok(root);
        }
        self.stack.push(root);
        loop {
            let rest = self.rest();
            if rest.is_empty() {
                return Err(self.malformed("unexpected end of document"));
            }
            if rest.starts_with("</") {
                self.pos += 2;
                let name = self.name()?;
                self.skip_whitespace();
                if !self.rest().starts_with('>') {
                    return Err(self.malformed("malformed end tag"));
                }
                let open = self.stack.last().map(|e| e.name.as_str()).unwrap_or("");
                if name != open {
                    return Err(self.malformed(format!("end tag '{name}' does not match '{open}'")));
                }
                self.pos += 1;
                let mut done = self.stack.pop().expect("open element");
                done.span.1 = self.pos;
                match self.stack.last_mut() {
                    Some(parent) => parent.children.push(Node::Element(done)),
                    None => return Ok(done),
                }
            } else if rest.starts_with('<') {
                self.check_markup()?;
                let (child, closed) = self.start_tag()?;
                if closed {
                    let mut child = child;
                    child.span.1 = self.pos;
                    self.stack.last_mut().expect("open element").children.push(Node::Element(child));
                } else {
                    self.stack.push(child);
                }
            } else {
                let end = rest.find('<').unwrap_or(rest.len());
                let raw = &rest[..end];
                if raw.contains("]]>") {
                    return Err(self.malformed("']]>' in character data"));
                }
                let text = self.decode(raw)?;
                self.pos += end;
                let parent = self.stack.last_mut().expect("open element");
                match parent.children.last_mut() {
                    Some(Node::Text(prev)) => prev.push_str(&text),
                    _ => parent.children.push(Node::Text(text)),
                }
            }
        }
    }

    /// Expands entity and character references in `raw`.
    fn decode(&self, raw: &str) -> Result<String, XmlError> {
        let mut out = String::with_capacity(raw.len());
        let mut rest = raw;
        let base = self.pos;
        while let Some(i) = rest.find(|c: char| c == '&' || !is_xml_char(c)) {
            let c = rest[i..].chars().next().expect("found char");
            if c != '&' {
                let offset = base + (raw.len() - rest.len()) + i;
                return Err(XmlError {
                    kind: XmlErrorKind::Malformed,
                    offset,
                    message: format!("character U+{:04X} is not allowed", c as u32),
                    path: self.path(),
                });
            }
            out.push_str(&rest[..i]);
            let tail = &rest[i + 1..];
            let semi = tail
                .find(';')
                .ok_or_else(|| self.malformed("unterminated entity reference"))?;
            let entity = &tail[..semi];
            let ch = match entity {
                "amp" => '&',
                "lt" => '<',
                "gt" => '>',
                "quot" => '"',
                "apos" => '\'',
                _ => {
                    let code = if let Some(hex) = entity.strip_prefix("#x") {
                        hex.bytes()
                            .all(|b| b.is_ascii_hexdigit())
                            .then(|| u32::from_str_radix(hex, 16).ok())
                            .flatten()
                    } else if let Some(dec) = entity.strip_prefix('#') {
                        dec.bytes()
                            .all(|b| b.is_ascii_digit())
                            .then(|| dec.parse::<u32>().ok())
                            .flatten()
                    } else {
                        None
                    };
                    match code.and_then(char::from_u32) {
                        Some(c) if is_xml_char(c) => c,
                        _ => return Err(self.malformed(format!("unknown entity '&{entity};'"))),
                    }
                }
            };
            out.push(ch);
            rest = &tail[semi + 1..];
        }
        out.push_str(rest);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_nested_elements_with_spans() {
        let doc = parse(b"<a><b>x &amp; y</b><c/></a>").unwrap();
        assert_eq!(doc.root.name, "a");
        let kids: Vec<_> = doc.root.child_elements().collect();
        assert_eq!(kids[0].text(), "x & y");
        assert_eq!(kids[1].name, "c");
        assert_eq!(doc.root.span, (0, 27));
        assert_eq!(doc.root.path_at(4, ""), Some("/a/b".into()));
    }

    #[test]
    fn mismatched_end_tag_is_malformed() {
        let err = parse(b"<a><b></a>").unwrap_err();
        assert_eq!(err.kind, XmlErrorKind::Malformed);
    }

    #[test]
    fn comments_are_unsupported_not_malformed() {
        let err = parse(b"<a><!-- hi --></a>").unwrap_err();
        assert_eq!(err.kind, XmlErrorKind::Unsupported);
        assert_eq!(err.path, "/a");
    }

    #[test]
    fn rejects_control_characters_and_bad_entities() {
        assert!(parse(b"<a>\x01</a>").is_err());
        assert!(parse(b"<a>&nbsp;</a>").is_err());
        assert!(parse(b"<a>&#0;</a>").is_err());
        assert_eq!(parse(b"<a>&#65;&#x42;</a>").unwrap().root.text(), "AB");
    }

    #[test]
    fn duplicate_attributes_are_malformed() {
        assert!(parse(br#"<a x="1" x="2"/>"#).is_err());
        assert!(parse(br#"<a x="1"y="2"/>"#).is_err());
    }

    #[test]
    fn deep_nesting_does_not_overflow() {
        let mut doc = String::new();
        for _ in 0..100_000 {
            doc.push_str("<a>");
        }
        assert!(parse(doc.as_bytes()).is_err());
    }

    #[test]
    fn pretty_and_compact_rendering() {
        let tree = Element::node(
            "a",
            vec![Element::leaf("b", "1 < 2"), Element::leaf("c", "").with_attribute("k", "v")],
        );
        let mut pretty = String::new();
        tree.write_pretty(&mut pretty, 0);
        assert_eq!(pretty, "<a>\n  <b>1 &lt; 2</b>\n  <c k=\"v\"></c>\n</a>\n");
        assert_eq!(tree.to_compact_string(), "<a><b>1 &lt; 2</b><c k=\"v\"></c></a>");
    }
}
