use proptest::prelude::*;
use tweetlink::textprep::{
    augment_split, chunk, clean, ChunkingConfig, CleaningConfig, EmojiMode, TokenSeq,
};

fn tokens() -> impl Strategy<Value = TokenSeq> {
    prop::collection::vec("[a-z]{1,6}", 1..60).prop_map(|v| TokenSeq::new(v).unwrap())
}

fn small_chunking() -> impl Strategy<Value = ChunkingConfig> {
    (1usize..8, 1usize..8, 1usize..8).prop_map(|(content_len, header_len, part_len)| {
        ChunkingConfig {
            content_len,
            header_len,
            part_len,
            ..ChunkingConfig::default()
        }
    })
}

proptest! {
    #[test]
    fn clean_is_idempotent(text in "\\PC{0,80}", alias in any::<bool>(), strip in any::<bool>(), min in 1usize..5) {
        let cfg = CleaningConfig {
            min_word_len: min,
            emoji_mode: if alias { EmojiMode::Alias } else { EmojiMode::Drop },
            strip_hashes: strip,
        };
        let once = clean(&text, &cfg);
        prop_assert_eq!(clean(&once, &cfg), once.clone());
        prop_assert!(!once.contains("  "));
        prop_assert_eq!(once.trim(), once.as_str());
    }

    #[test]
    fn clean_with_emoji_and_urls(words in prop::collection::vec("[A-Za-z]{1,8}|https?://[a-z]{1,5}\\.co/[a-z0-9]{1,4}|@[a-z]{1,6}|😀|🇺🇦|#[A-Za-z]{1,5}|[0-9]{1,3}", 0..15)) {
        let text = words.join(" ");
        let out = clean(&text, &CleaningConfig::default());
        prop_assert!(!out.contains("http"));
        prop_assert!(!out.contains('@'));
        prop_assert!(out.chars().all(|c| c == ' ' || c.is_lowercase()));
        prop_assert!(out.split_whitespace().all(|w| w.chars().count() >= 3));
    }

    #[test]
    fn chunks_share_length_and_flatten_back(t in tokens(), cfg in small_chunking()) {
        let chunks = chunk(&t, &cfg).unwrap();
        prop_assert!(chunks.iter().all(|c| c.len() == cfg.content_len + 2));
        let content: Vec<String> = chunks
            .iter()
            .flat_map(|c| c[1..c.len() - 1].iter().filter(|x| **x != cfg.pad).cloned())
            .collect();
        prop_assert_eq!(content.as_slice(), t.as_slice());
        prop_assert_eq!(chunks.len(), t.len().div_ceil(cfg.content_len));
    }

    #[test]
    fn augment_split_loses_nothing(t in tokens(), cfg in small_chunking()) {
        let (header, parts) = augment_split(&t, &cfg).unwrap();
        prop_assert_eq!(header.len(), cfg.header_len.min(t.len()));
        prop_assert!(parts.iter().all(|p| !p.is_empty() && p.len() <= cfg.part_len));
        let joined: Vec<String> = header.iter().chain(parts.iter().flat_map(|p| p.iter())).cloned().collect();
        prop_assert_eq!(joined.as_slice(), t.as_slice());
        prop_assert_eq!(parts.len(), t.len().saturating_sub(cfg.header_len).div_ceil(cfg.part_len));
    }
}
