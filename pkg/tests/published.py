"""Published per-AU rows and efficiency timings used as arithmetic oracles."""

DISFA_AUS = ("AU01", "AU02", "AU04", "AU05", "AU06", "AU09", "AU12", "AU15", "AU17", "AU20", "AU25", "AU26")
DISFA_PCC = (0.63, 0.72, 0.78, 0.59, 0.59, 0.62, 0.85, 0.36, 0.50, 0.34, 0.94, 0.68)
DISFA_PCC_AVG = 0.63

BP4D_AUS = ("AU01", "AU02", "AU04", "AU06", "AU07", "AU10", "AU12", "AU14", "AU15", "AU17", "AU23", "AU24")
BP4D_F1 = (49.9, 47.8, 56.5, 77.9, 79.6, 84.0, 87.0, 59.0, 46.0, 63.1, 43.2, 49.9)
BP4D_F1_AVG = 62.0

# (avg seconds per 1000-image round, published fps)
TIMINGS = {
    "openface_au_only": (50.11, 19.96),
    "libreface_au_only": (25.11, 39.82),
    "libreface_full": (37.20, 26.88),
    "libreface_gpu": (6.07, 164.82),
}
