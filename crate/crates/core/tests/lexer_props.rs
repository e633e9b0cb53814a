use proptest::prelude::*;
use vulnhound_core::pylex::*;

/// Python-flavoured fragments glued together at random, plus raw noise.
fn python_like() -> impl Strategy<Value = String> {
    let piece = prop_oneof![
        Just("def f(a, b):\n".to_string()),
        Just("    return a + b\n".to_string()),
        Just("x = \"SELECT * FROM t WHERE id=\" + uid\n".to_string()),
        Just("cursor.execute(q, (uid,))\n".to_string()),
        Just("'''doc\nstring'''\n".to_string()),
        Just("f\"{x!r:>10}\"\n".to_string()),
        Just("# comment\n".to_string()),
        Just("\n\n".to_string()),
        Just("\t\tif a >= 0x1F and b != 3.5e-2:\n".to_string()),
        Just("y = [1, 2,\n     3]\n".to_string()),
        Just("s = 'unterminated\n".to_string()),
        Just("\\\n".to_string()),
        Just("λ = 'ünïcode' $ ?\n".to_string()),
        "[ -~\t\n]{0,12}",
    ];
    prop::collection::vec(piece, 0..24).prop_map(|v| v.concat())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn spans_are_faithful_and_ordered(src in python_like()) {
        let stream = tokenize_str(&src);
        prop_assert_eq!(stream.source_len, src.len());
        let mut last_end = 0usize;
        let mut last_start = 0usize;
        for t in &stream.tokens {
            prop_assert!(t.span.start >= last_start);
            prop_assert!(t.span.end <= src.len());
            if t.kind.is_synthetic() {
                prop_assert_eq!(t.span.start, t.span.end);
            } else {
                prop_assert!(t.span.start >= last_end, "overlap at {:?}", t);
                if t.kind != TokenKind::Newline {
                    prop_assert!(t.span.start < t.span.end);
                }
                prop_assert_eq!(&src[t.span.start..t.span.end], t.text.as_str());
                last_end = t.span.end;
            }
            last_start = t.span.start;
        }
    }

    #[test]
    fn tokens_lie_within_contiguous_lines(src in python_like()) {
        let stream = tokenize_str(&src);
        let lines = line_spans(&src);
        // lines partition the source
        let mut pos = 0;
        for l in &lines {
            prop_assert_eq!(l.start, pos);
            pos = l.end;
        }
        prop_assert_eq!(pos, src.len());
        let index = LineIndex::new(&src);
        for t in stream.tokens.iter().filter(|t| !t.kind.is_synthetic()) {
            let (a, b) = index.line_range(t.span);
            prop_assert!(a >= 1 && a <= b && b <= lines.len());
            prop_assert!(lines[a - 1].start <= t.span.start);
            prop_assert!(t.span.end <= lines[b - 1].end);
        }
    }

    #[test]
    fn never_fails_on_valid_utf8(s in "\\PC{0,200}") {
        let stream = tokenize(s.as_bytes()).unwrap();
        prop_assert_eq!(stream.source_len, s.len());
    }

    #[test]
    fn invalid_utf8_reports_offset(prefix in "[a-z ]{0,20}", suffix in "[a-z ]{0,5}") {
        let mut bytes = prefix.clone().into_bytes();
        bytes.push(0xFF);
        bytes.extend_from_slice(suffix.as_bytes());
        let err = tokenize(&bytes).unwrap_err();
        prop_assert_eq!(err.offset, prefix.len());
    }
}

#[test]
fn spec_examples() {
    assert!(tokenize_str("").is_empty());
    let s = tokenize_str("x=1");
    let got: Vec<(&str, TokenKind, (usize, usize))> = s
        .tokens
        .iter()
        .map(|t| (t.text.as_str(), t.kind, (t.span.start, t.span.end)))
        .collect();
    assert_eq!(
        got,
        vec![
            ("x", TokenKind::Identifier, (0, 1)),
            ("=", TokenKind::Operator, (1, 2)),
            ("1", TokenKind::NumberLiteral, (2, 3)),
        ]
    );
    assert_eq!(line_spans("a\nb\n"), vec![Span::new(0, 2), Span::new(2, 4)]);
    assert_eq!(line_spans("abc"), vec![Span::new(0, 3)]);
    assert!(line_spans("").is_empty());
}
