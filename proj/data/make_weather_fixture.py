"""Writes weather_fixture.csv: 500 hourly rows of synthetic weather-shaped data.

Daily and slow seasonal cycles plus AR(1) noise; the values are plausible but
do not come from any real station.
"""

import csv
import pathlib

import numpy as np

ROWS = 500


def main() -> None:
    rng = np.random.default_rng(20240611)
    t = np.arange(ROWS, dtype=float)
    day = 2 * np.pi * t / 24.0
    season = 2 * np.pi * t / (24.0 * 365.0)

    def ar1(scale: float, phi: float = 0.9) -> np.ndarray:
        e = rng.normal(0.0, scale, ROWS)
        out = np.empty(ROWS)
        out[0] = e[0]
        for k in range(1, ROWS):
            out[k] = phi * out[k - 1] + e[k]
        return out

    temp = 8.0 + 6.0 * np.sin(day - 2.0) + 3.0 * np.sin(season) + ar1(0.4)
    pressure = 1005.0 + 4.0 * np.sin(season * 7) + ar1(0.3, 0.97)
    humidity = np.clip(75.0 - 2.5 * (temp - 8.0) + ar1(1.5), 15.0, 100.0)
    wind = np.abs(2.0 + 1.2 * np.sin(day + 1.0) + ar1(0.5))
    dew = temp - (100.0 - humidity) / 5.0
    vapour = 6.1 * np.exp(17.27 * dew / (dew + 237.3))

    path = pathlib.Path(__file__).with_name("weather_fixture.csv")
    with path.open("w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["hour", "T_degC", "p_mbar", "rh_percent", "wv_ms", "Tdew_degC", "VPact_mbar"])
        for k in range(ROWS):
            w.writerow([k, f"{temp[k]:.3f}", f"{pressure[k]:.2f}", f"{humidity[k]:.2f}", f"{wind[k]:.3f}",
                        f"{dew[k]:.3f}", f"{vapour[k]:.3f}"])


if __name__ == "__main__":
    main()
