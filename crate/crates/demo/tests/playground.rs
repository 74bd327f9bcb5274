use codeir_demo::{corrupt, lr_curve, normalize_ir};

#[test]
fn zero_rate_keeps_the_text() {
    let text = "fn add ( a , b ) { a + b }";
    for mode in ["mlm", "span", "drop"] {
        assert_eq!(corrupt(text, mode, 0.0, 3.0, 1).unwrap(), text);
    }
    assert_eq!(corrupt(text, "shuffle", 0.0, 0.0, 1).unwrap(), text);
}

#[test]
fn full_masking_masks_every_word() {
    assert_eq!(corrupt("a b c", "mlm", 1.0, 0.0, 0).unwrap(), "<mask> <mask> <mask>");
}

#[test]
fn curve_peaks_at_the_end_of_warmup() {
    let c = lr_curve(1e-3, 10, 40);
    assert_eq!(c.len(), 41);
    assert_eq!(c[0], 0.0);
    assert_eq!(c[10], 1e-3);
    assert!((c[40] - 5e-4).abs() < 1e-15);
}

#[test]
fn normalizes_with_the_selected_passes() {
    let ir = "define i32 @_Z1fi(i32 %0) #0 {\nentry:\n  ret i32 %0\n}\n";
    let all = normalize_ir(ir, true, true, true).unwrap();
    assert!(all.contains("bb0:"), "{all}");
    assert!(all.contains("@\"f(int)\"") || all.contains("f(int)"), "{all}");
    let raw = normalize_ir(ir, false, false, false).unwrap();
    assert!(raw.contains("entry:") && raw.contains("_Z1fi"), "{raw}");
}
