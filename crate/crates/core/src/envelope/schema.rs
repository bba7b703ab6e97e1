//! Closed-schema walking over parsed XML trees.
//!
//! [`Fields`] checks the element children of one container against an
//! ordered field list and records every deviation as a [`Violation`] with
//! the element path it occurred at. Typed accessors then read leaves and
//! insist that each value is spelled in its canonical form.

use std::str::FromStr;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::domain::{wire_enum, Currency, Money};
use crate::xml::Element;

wire_enum!(Rule {
    MalformedXml => "malformed-xml",
    UnsupportedConstruct => "unsupported-construct",
    UnexpectedRoot => "unexpected-root",
    NamespaceMismatch => "namespace-mismatch",
    RequiredElementMissing => "required-element-missing",
    UnknownElement => "unknown-element",
    ElementOutOfOrder => "element-out-of-order",
    DuplicateElement => "duplicate-element",
    UnexpectedText => "unexpected-text",
    ExpectedText => "expected-text",
    UnknownAttribute => "unknown-attribute",
    RequiredAttributeMissing => "required-attribute-missing",
    BodyCardinality => "body-cardinality",
    UnknownService => "unknown-service",
    UnknownOperation => "unknown-operation",
    OperationMismatch => "operation-mismatch",
    InvalidUuid => "invalid-uuid",
    InvalidTimestamp => "invalid-timestamp",
    InvalidAmount => "invalid-amount",
    InvalidValue => "invalid-value",
    NonCanonicalForm => "non-canonical-form",
});

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub path: String,
    pub rule: Rule,
    pub detail: String,
}

/// Outcome of validating a document: `valid` iff there are no violations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub valid: bool,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn from_violations(violations: Vec<Violation>) -> Self {
        ValidationReport { valid: violations.is_empty(), violations }
    }
}

#[derive(Debug, Default)]
pub(crate) struct Ctx {
    pub violations: Vec<Violation>,
}

impl Ctx {
    pub fn push(&mut self, path: impl Into<String>, rule: Rule, detail: impl Into<String>) {
        self.violations.push(Violation { path: path.into(), rule, detail: detail.into() });
    }

    /// Flags attributes on an element that admits none.
    pub fn no_attributes(&mut self, el: &Element, path: &str) {
        for attr in &el.attributes {
            self.push(
                format!("{path}/@{}", attr.name),
                Rule::UnknownAttribute,
                format!("attribute '{}' is not allowed", attr.name),
            );
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Occurs {
    One,
    Optional,
    Many,
}

pub(crate) type FieldSpec = (&'static str, Occurs);

pub(crate) fn canonical_timestamp(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

pub(crate) fn canonical_uuid(u: &Uuid) -> String {
    u.hyphenated().to_string()
}

pub(crate) struct Fields<'a> {
    path: String,
    slots: Vec<(&'static str, Vec<&'a Element>)>,
}

impl<'a> Fields<'a> {
    pub fn read(el: &'a Element, path: &str, spec: &[FieldSpec], cx: &mut Ctx) -> Fields<'a> {
        cx.no_attributes(el, path);
        if el.children.iter().any(|n| matches!(n, crate::xml::Node::Text(t) if !t.trim_matches([' ', '\t', '\n', '\r']).is_empty()))
        {
            cx.push(path, Rule::UnexpectedText, "character data is not allowed here");
        }
        let mut slots: Vec<(&'static str, Vec<&'a Element>)> =
            spec.iter().map(|(name, _)| (*name, Vec::new())).collect();
        let mut furthest = 0usize;
        for child in el.child_elements() {
            let child_path = format!("{path}/{}", child.name);
            let Some(idx) = spec.iter().position(|(n, _)| *n == child.name) else {
                cx.push(child_path, Rule::UnknownElement, format!("element '{}' is not allowed here", child.name));
                continue;
            };
            let seen = &mut slots[idx].1;
            if !seen.is_empty() && spec[idx].1 != Occurs::Many {
                cx.push(child_path, Rule::DuplicateElement, format!("element '{}' appears more than once", child.name));
                continue;
            }
            if idx < furthest || (idx == furthest && !seen.is_empty() && seen_last_gap(el, child, spec[idx].0)) {
                cx.push(child_path, Rule::ElementOutOfOrder, format!("element '{}' is out of order", child.name));
            }
            furthest = furthest.max(idx);
            seen.push(child);
        }
        for ((name, occurs), (_, seen)) in spec.iter().zip(&slots) {
            if *occurs == Occurs::One && seen.is_empty() {
                cx.push(format!("{path}/{name}"), Rule::RequiredElementMissing, format!("element '{name}' is required"));
            }
        }
        Fields { path: path.to_string(), slots }
    }

    pub fn child_path(&self, name: &str) -> String {
        format!("{}/{name}", self.path)
    }

    pub fn get(&self, name: &str) -> Option<&'a Element> {
        self.all(name).first().copied()
    }

    pub fn all(&self, name: &str) -> &[&'a Element] {
        self.slots
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, v)| v.as_slice())
            .unwrap_or(&[])
    }

    /// Text of a required leaf. `None` means a violation was (or had
    /// already been) recorded.
    pub fn text(&self, name: &str, cx: &mut Ctx) -> Option<String> {
        let el = self.get(name)?;
        leaf_text(el, &self.child_path(name), cx)
    }

    /// `Some(None)` when the optional leaf is absent.
    pub fn opt_text(&self, name: &str, cx: &mut Ctx) -> Option<Option<String>> {
        match self.get(name) {
            None => Some(None),
            Some(el) => leaf_text(el, &self.child_path(name), cx).map(Some),
        }
    }

    pub fn parsed<T: FromStr + ToString>(&self, name: &str, rule: Rule, cx: &mut Ctx) -> Option<T> {
        let text = self.text(name, cx)?;
        parse_canonical(&text, &self.child_path(name), rule, cx)
    }

    pub fn opt_parsed<T: FromStr + ToString>(&self, name: &str, rule: Rule, cx: &mut Ctx) -> Option<Option<T>> {
        match self.opt_text(name, cx)? {
            None => Some(None),
            Some(text) => parse_canonical(&text, &self.child_path(name), rule, cx).map(Some),
        }
    }

    pub fn uuid(&self, name: &str, cx: &mut Ctx) -> Option<Uuid> {
        let text = self.text(name, cx)?;
        check_uuid(&text, &self.child_path(name), cx)
    }

    pub fn opt_uuid(&self, name: &str, cx: &mut Ctx) -> Option<Option<Uuid>> {
        match self.opt_text(name, cx)? {
            None => Some(None),
            Some(text) => check_uuid(&text, &self.child_path(name), cx).map(Some),
        }
    }

    pub fn timestamp(&self, name: &str, cx: &mut Ctx) -> Option<DateTime<Utc>> {
        let text = self.text(name, cx)?;
        check_timestamp(&text, &self.child_path(name), cx)
    }

    pub fn boolean(&self, name: &str, cx: &mut Ctx) -> Option<bool> {
        match self.text(name, cx)?.as_str() {
            "true" => Some(true),
            "false" => Some(false),
            other => {
                cx.push(self.child_path(name), Rule::InvalidValue, format!("'{other}' is not 'true' or 'false'"));
                None
            }
        }
    }

    pub fn element(&self, name: &str) -> Option<(&'a Element, String)> {
        self.get(name).map(|el| (el, self.child_path(name)))
    }

    /// A money wrapper: `<Name><Amount currency="XXX">N</Amount></Name>`.
    pub fn money(&self, name: &str, cx: &mut Ctx) -> Option<Money> {
        let (el, path) = self.element(name)?;
        read_money(el, &path, cx)
    }
}

/// Whether an element with the same name was separated from `child` by a
/// different element (a repeated field split by another field).
fn seen_last_gap(parent: &Element, child: &Element, name: &str) -> bool {
    let mut last_same = None;
    let mut gap = false;
    for sibling in parent.child_elements() {
        if std::ptr::eq(sibling, child) {
            return last_same.is_some() && gap;
        }
        if sibling.name == name {
            last_same = Some(());
            gap = false;
        } else if last_same.is_some() {
            gap = true;
        }
    }
    false
}

pub(crate) fn leaf_text(el: &Element, path: &str, cx: &mut Ctx) -> Option<String> {
    let before = cx.violations.len();
    cx.no_attributes(el, path);
    if el.has_element_children() {
        cx.push(path, Rule::ExpectedText, "expected character data, found elements");
    }
    (cx.violations.len() == before).then(|| el.text())
}

fn parse_canonical<T: FromStr + ToString>(text: &str, path: &str, rule: Rule, cx: &mut Ctx) -> Option<T> {
    match text.parse::<T>() {
        Ok(v) if v.to_string() == text => Some(v),
        _ => {
            cx.push(path, rule, format!("'{text}' is not a valid value"));
            None
        }
    }
}

pub(crate) fn check_uuid(text: &str, path: &str, cx: &mut Ctx) -> Option<Uuid> {
    match Uuid::try_parse(text) {
        Ok(u) if canonical_uuid(&u) == text => Some(u),
        _ => {
            cx.push(path, Rule::InvalidUuid, format!("'{text}' is not a lower-case hyphenated UUID"));
            None
        }
    }
}

pub(crate) fn check_timestamp(text: &str, path: &str, cx: &mut Ctx) -> Option<DateTime<Utc>> {
    match DateTime::parse_from_rfc3339(text) {
        Ok(t) if t.offset().local_minus_utc() == 0 => {
            let utc = t.with_timezone(&Utc);
            if canonical_timestamp(&utc) == text {
                return Some(utc);
            }
        }
        _ => {}
    }
    cx.push(path, Rule::InvalidTimestamp, format!("'{text}' is not a canonical RFC 3339 UTC timestamp"));
    None
}

pub(crate) fn money_element(name: &str, money: &Money) -> Element {
    Element::node(
        name,
        vec![Element::leaf("Amount", money.amount_minor.to_string())
            .with_attribute("currency", money.currency.as_str())],
    )
}

pub(crate) fn read_money(el: &Element, path: &str, cx: &mut Ctx) -> Option<Money> {
    let f = Fields::read(el, path, &[("Amount", Occurs::One)], cx);
    let amount_el = f.get("Amount")?;
    let amount_path = f.child_path("Amount");
    let before = cx.violations.len();
    for attr in &amount_el.attributes {
        if attr.name != "currency" {
            cx.push(format!("{amount_path}/@{}", attr.name), Rule::UnknownAttribute, format!("attribute '{}' is not allowed", attr.name));
        }
    }
    let currency = match amount_el.attribute("currency") {
        None => {
            cx.push(format!("{amount_path}/@currency"), Rule::RequiredAttributeMissing, "attribute 'currency' is required");
            None
        }
        Some(code) => match Currency::new(code) {
            Ok(c) => Some(c),
            Err(e) => {
                cx.push(format!("{amount_path}/@currency"), Rule::InvalidValue, e);
                None
            }
        },
    };
    if amount_el.has_element_children() {
        cx.push(&amount_path, Rule::ExpectedText, "expected character data, found elements");
    }
    if cx.violations.len() != before {
        return None;
    }
    let text = amount_el.text();
    let amount = parse_canonical::<u64>(&text, &amount_path, Rule::InvalidAmount, cx)?;
    Some(Money::new(amount, currency?))
}
