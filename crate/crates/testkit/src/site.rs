//! A fixed 12-node micro-site: 6 pages, 3 uploads, 2 theme assets and one
//! off-site link. Each page lists its outgoing links both as written in the
//! HTML and as the node they resolve to, so a test oracle can walk the graph
//! without parsing anything.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Page,
    Media,
    Asset,
    External,
}

#[derive(Debug, Clone, Copy)]
pub struct Link {
    /// Text inside the quotes in the served HTML.
    pub written: &'static str,
    /// Request target of the node it points to, or the full URL for
    /// off-site nodes.
    pub to: &'static str,
}

#[derive(Debug, Clone)]
pub struct SiteNode {
    pub target: &'static str,
    pub kind: NodeKind,
    pub links: Vec<Link>,
}

const fn l(written: &'static str, to: &'static str) -> Link {
    Link { written, to }
}

pub const EXTERNAL: &str = "https://external.example/profile";

pub fn micro_site() -> Vec<SiteNode> {
    use NodeKind::*;
    let page = |target, links| SiteNode { target, kind: Page, links };
    let leaf = |target, kind| SiteNode {
        target,
        kind,
        links: vec![],
    };
    vec![
        page(
            "/",
            vec![
                l("/about/", "/about/"),
                l("{{base}}/gallery/", "/gallery/"),
                l("/wp-content/themes/site/style.css", "/wp-content/themes/site/style.css"),
                l("/wp-includes/js/app.js?ver=6.4", "/wp-includes/js/app.js?ver=6.4"),
                l(EXTERNAL, EXTERNAL),
            ],
        ),
        page(
            "/about/",
            vec![
                l("/alumni/", "/alumni/"),
                l("/", "/"),
                l("/wp-content/uploads/2019/class.jpg", "/wp-content/uploads/2019/class.jpg"),
            ],
        ),
        page(
            "/alumni/",
            vec![
                l("/contact/", "/contact/"),
                l("/alumni/#top", "/alumni/"),
                l("/wp-content/uploads/2019/yearbook.pdf", "/wp-content/uploads/2019/yearbook.pdf"),
            ],
        ),
        page(
            "/gallery/",
            vec![
                l("/events/?year=2019&amp;page=1", "/events/?year=2019&page=1"),
                l("/wp-content/uploads/2019/class.jpg", "/wp-content/uploads/2019/class.jpg"),
                l("/wp-content/uploads/2020/reunion.png", "/wp-content/uploads/2020/reunion.png"),
                l("/wp-content/themes/site/style.css", "/wp-content/themes/site/style.css"),
            ],
        ),
        page(
            "/events/?year=2019&page=1",
            vec![l("/contact/", "/contact/"), l("{{base}}/gallery/", "/gallery/")],
        ),
        page("/contact/", vec![l("/", "/"), l(EXTERNAL, EXTERNAL)]),
        leaf("/wp-content/uploads/2019/class.jpg", Media),
        leaf("/wp-content/uploads/2019/yearbook.pdf", Media),
        leaf("/wp-content/uploads/2020/reunion.png", Media),
        leaf("/wp-content/themes/site/style.css", Asset),
        leaf("/wp-includes/js/app.js?ver=6.4", Asset),
        leaf(EXTERNAL, External),
    ]
}

/// HTML for a page node. Media links go in single-quoted `src` attributes,
/// the rest in double-quoted `href`s.
pub fn render(node: &SiteNode) -> String {
    let mut html = format!(
        "<!doctype html>\n<html><head><title>{}</title></head><body>\n",
        node.target
    );
    for link in &node.links {
        if link.to.contains("/uploads/") {
            html.push_str(&format!("<img src='{}' alt=\"\">\n", link.written));
        } else {
            html.push_str(&format!("<a href=\"{}\">link</a>\n", link.written));
        }
    }
    html.push_str("</body></html>\n");
    html
}
