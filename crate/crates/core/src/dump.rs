//! Streaming reader for MediaWiki XML exports.
//!
//! The stream holds one page in memory at a time; dump size never matters,
//! only the largest single page does. Redirects and non-article namespaces
//! are counted and skipped. Broken wikitext inside a page degrades that
//! page's derived fields; only malformed XML aborts the stream.

use std::io::BufRead;

use quick_xml::events::Event;
use quick_xml::Reader;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::wikitext;

/// One standard article, split into the fields later stages consume.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Article {
    pub page_id: u64,
    pub title: String,
    /// Raw markup as found in the dump.
    pub wikitext: String,
    /// Markup-free prose.
    pub body: String,
    /// First infobox template, braces included. Absent when no infobox
    /// opens or the first one never closes.
    pub infobox_block: Option<String>,
    pub categories: Vec<String>,
    pub hyperlinks: Vec<String>,
}

/// Page tallies for one pass over a dump.
/// `pages_seen == standard_articles + skipped_redirects + skipped_technical`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DumpStats {
    pub pages_seen: u64,
    pub standard_articles: u64,
    pub skipped_redirects: u64,
    pub skipped_technical: u64,
}

/// Namespace prefixes that mark non-article pages. The main namespace has no
/// prefix; anything of the form `Prefix:Title` with a prefix from this table
/// is technical.
const NAMESPACE_PREFIXES: &[&str] = &[
    "Talk",
    "User",
    "User talk",
    "Wikipedia",
    "Wikipedia talk",
    "File",
    "File talk",
    "Image",
    "MediaWiki",
    "MediaWiki talk",
    "Template",
    "Template talk",
    "Help",
    "Help talk",
    "Category",
    "Category talk",
    "Portal",
    "Portal talk",
    "Draft",
    "Draft talk",
    "TimedText",
    "TimedText talk",
    "Module",
    "Module talk",
    "Special",
    "Media",
];

/// Whether the markup is a redirect page (`#REDIRECT [[...]]`, any case).
pub fn is_redirect(wikitext: &str) -> bool {
    wikitext
        .trim_start()
        .get(..9)
        .is_some_and(|head| head.eq_ignore_ascii_case("#redirect"))
}

fn has_namespace_prefix(title: &str) -> bool {
    let Some((prefix, rest)) = title.split_once(':') else {
        return false;
    };
    if rest.is_empty() {
        return false;
    }
    let prefix = prefix.trim();
    NAMESPACE_PREFIXES
        .iter()
        .any(|p| p.eq_ignore_ascii_case(prefix))
}

/// Whether a page is a standard article: not a redirect and not in a
/// technical namespace.
pub fn is_standard_article(title: &str, wikitext: &str) -> bool {
    !is_redirect(wikitext) && !has_namespace_prefix(title)
}

/// Split one page's markup into an [`Article`]. Pure: identical inputs give
/// identical articles.
pub fn parse_article(page_id: u64, title: &str, markup: &str) -> Article {
    Article {
        page_id,
        title: title.to_string(),
        body: wikitext::plain_text(markup),
        infobox_block: wikitext::first_infobox_block(markup).map(str::to_string),
        categories: wikitext::categories(markup),
        hyperlinks: wikitext::internal_links(markup),
        wikitext: markup.to_string(),
    }
}

/// Iterator over the standard articles of a dump, in document order.
/// After exhaustion, [`ArticleStream::stats`] reports the page tallies.
pub struct ArticleStream<R: BufRead> {
    reader: Reader<R>,
    buf: Vec<u8>,
    stats: DumpStats,
    state: StreamState,
    saw_root: bool,
    done: bool,
}

#[derive(Default)]
struct StreamState {
    in_page: bool,
    in_revision: bool,
    in_contributor: bool,
    capture: Option<Field>,
    title: Option<String>,
    page_id: Option<u64>,
    text: Option<String>,
    pending: String,
}

#[derive(Clone, Copy, PartialEq)]
enum Field {
    Title,
    PageId,
    Text,
}

/// Start streaming articles from an XML export. The root element must be
/// `<mediawiki>`; anything else fails fast.
pub fn stream_articles<R: BufRead>(source: R) -> ArticleStream<R> {
    let mut reader = Reader::from_reader(source);
    let config = reader.config_mut();
    config.trim_text(false);
    ArticleStream {
        reader,
        buf: Vec::new(),
        stats: DumpStats::default(),
        state: StreamState::default(),
        saw_root: false,
        done: false,
    }
}

impl<R: BufRead> ArticleStream<R> {
    /// Tallies for the pages consumed so far; complete once the iterator
    /// returns `None`.
    pub fn stats(&self) -> DumpStats {
        self.stats
    }

    fn xml_error(&self, message: impl ToString) -> Error {
        Error::Xml {
            // Infallible either way; written so the build is indifferent to
            // the width buffer_position reports.
            offset: u64::try_from(self.reader.buffer_position()).unwrap_or(u64::MAX),
            message: message.to_string(),
        }
    }

    /// Handles `</page>`: classify the page, bump tallies, maybe emit.
    fn finish_page(&mut self) -> Option<Article> {
        let state = std::mem::take(&mut self.state);
        self.stats.pages_seen += 1;
        let (Some(title), Some(page_id), Some(text)) =
            (state.title, state.page_id, state.text)
        else {
            // A page element without title, id or text is not an article.
            self.stats.skipped_technical += 1;
            return None;
        };
        let title = title.trim().to_string();
        if title.is_empty() {
            self.stats.skipped_technical += 1;
            return None;
        }
        if is_redirect(&text) {
            self.stats.skipped_redirects += 1;
            return None;
        }
        if has_namespace_prefix(&title) {
            self.stats.skipped_technical += 1;
            return None;
        }
        self.stats.standard_articles += 1;
        Some(parse_article(page_id, &title, &text))
    }
}

/// Owned classification of an element name, so event buffers can be released
/// before the stream state is touched.
#[derive(Clone, Copy, PartialEq)]
enum Tag {
    MediaWiki,
    Page,
    Revision,
    Contributor,
    Title,
    Id,
    Text,
    Other,
}

impl Tag {
    fn classify(name: &[u8]) -> Tag {
        match name {
            b"mediawiki" => Tag::MediaWiki,
            b"page" => Tag::Page,
            b"revision" => Tag::Revision,
            b"contributor" => Tag::Contributor,
            b"title" => Tag::Title,
            b"id" => Tag::Id,
            b"text" => Tag::Text,
            _ => Tag::Other,
        }
    }
}

/// What one XML event means for the stream, with no borrow of the reader.
enum Step {
    Open(Tag),
    Close(Tag),
    Chars(String),
    Eof,
    Skip,
    Fail(String),
}

impl<R: BufRead> Iterator for ArticleStream<R> {
    type Item = Result<Article>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        loop {
            self.buf.clear();
            let step = match self.reader.read_event_into(&mut self.buf) {
                Err(e) => Step::Fail(e.to_string()),
                Ok(Event::Start(start)) => Step::Open(Tag::classify(start.local_name().as_ref())),
                Ok(Event::End(end)) => Step::Close(Tag::classify(end.local_name().as_ref())),
                Ok(Event::Text(text)) => {
                    if self.state.capture.is_some() {
                        match text.unescape() {
                            Ok(cow) => Step::Chars(cow.into_owned()),
                            Err(e) => Step::Fail(e.to_string()),
                        }
                    } else {
                        Step::Skip
                    }
                }
                Ok(Event::CData(cdata)) => {
                    if self.state.capture.is_some() {
                        Step::Chars(String::from_utf8_lossy(cdata.as_ref()).into_owned())
                    } else {
                        Step::Skip
                    }
                }
                Ok(Event::Eof) => Step::Eof,
                Ok(_) => Step::Skip,
            };
            match step {
                Step::Fail(message) => {
                    self.done = true;
                    return Some(Err(self.xml_error(message)));
                }
                Step::Open(tag) => {
                    if !self.saw_root {
                        if tag != Tag::MediaWiki {
                            self.done = true;
                            return Some(Err(
                                self.xml_error("root element is not <mediawiki>")
                            ));
                        }
                        self.saw_root = true;
                        continue;
                    }
                    match tag {
                        Tag::Page => {
                            self.state = StreamState { in_page: true, ..Default::default() }
                        }
                        Tag::Revision if self.state.in_page => self.state.in_revision = true,
                        Tag::Contributor if self.state.in_page => self.state.in_contributor = true,
                        Tag::Title if self.state.in_page && !self.state.in_revision => {
                            self.state.capture = Some(Field::Title);
                            self.state.pending.clear();
                        }
                        // Revisions and contributors carry ids of their own;
                        // only the first id directly under <page> counts.
                        Tag::Id
                            if self.state.in_page
                                && !self.state.in_revision
                                && !self.state.in_contributor
                                && self.state.page_id.is_none() =>
                        {
                            self.state.capture = Some(Field::PageId);
                            self.state.pending.clear();
                        }
                        Tag::Text if self.state.in_revision && !self.state.in_contributor => {
                            self.state.capture = Some(Field::Text);
                            self.state.pending.clear();
                        }
                        _ => {}
                    }
                }
                Step::Chars(chunk) => self.state.pending.push_str(&chunk),
                Step::Close(tag) => match tag {
                    Tag::Page => {
                        if let Some(article) = self.finish_page() {
                            return Some(Ok(article));
                        }
                    }
                    Tag::Revision => self.state.in_revision = false,
                    Tag::Contributor => self.state.in_contributor = false,
                    Tag::Title | Tag::Id | Tag::Text => {
                        if let Some(field) = self.state.capture.take() {
                            let value = std::mem::take(&mut self.state.pending);
                            match field {
                                Field::Title => self.state.title = Some(value),
                                Field::Text => self.state.text = Some(value),
                                Field::PageId => {
                                    // Unparseable ids leave the page
                                    // degenerate; finish_page skips it.
                                    self.state.page_id = value.trim().parse().ok();
                                }
                            }
                        }
                    }
                    _ => {}
                },
                Step::Eof => {
                    self.done = true;
                    if !self.saw_root {
                        return Some(Err(self.xml_error("empty input, expected <mediawiki>")));
                    }
                    return None;
                }
                Step::Skip => {}
            }
        }
    }
}
