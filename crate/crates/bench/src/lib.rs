//! Synthetic inputs shared by the benchmarks.

use sitekeep_core::fetch::MemoryFetcher;

pub const HOST: &str = "https://bench.test";

/// A WordPress-like page with `n_links` internal links, some media, a few
/// assets and the usual rotating tokens.
pub fn synthetic_page(seed: usize, n_links: usize) -> String {
    let mut html = String::from(
        "<!doctype html><html><head>\n<meta name=\"csrf-token\" content=\"Qx7Token\">\n\
         <link rel=\"stylesheet\" href=\"/wp-content/themes/t/style.css?ver=6.4\">\n\
         <script nonce=\"abc123\">var ts = 1700000000;</script>\n</head><body>\n",
    );
    for i in 0..n_links {
        let target = (seed * 31 + i * 17) % 1000;
        match i % 5 {
            0 => html.push_str(&format!("<img src='/wp-content/uploads/2019/{target}.jpg'>\n")),
            1 => html.push_str(&format!("<a href=\"{HOST}/p/{target}/?ref=nav&amp;x=1\">p{target}</a>\n")),
            _ => html.push_str(&format!("<a href=\"/p/{target}/\">p{target}</a>\n")),
        }
    }
    html.push_str("<input type=\"hidden\" name=\"_wpnonce\" value=\"9f8e7d6c5b\"></body></html>\n");
    html
}

/// `n_pages` pages under `/p/<i>/`, each linking to `links_per_page` others.
pub fn synthetic_site(n_pages: usize, links_per_page: usize) -> MemoryFetcher {
    let site = MemoryFetcher::new();
    site.page(&format!("{HOST}/"), synthetic_page(0, links_per_page));
    for i in 0..n_pages {
        let mut body = String::new();
        for j in 1..=links_per_page {
            body.push_str(&format!("<a href=\"/p/{}/\">x</a>\n", (i * 7 + j * 13) % n_pages));
        }
        site.page(&format!("{HOST}/p/{i}/"), body);
    }
    site
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn page_has_links() {
        let links = sitekeep_core::discovery::extract_candidate_links(synthetic_page(1, 50).as_bytes());
        assert!(links.len() >= 50);
    }
}
