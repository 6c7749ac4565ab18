//! Matplotlib scripts written next to the CSV tables. Each reads the files
//! from its own directory and saves a PNG there.

use crate::config::Scenario;

const HEADER: &str = "\
import csv
import glob
import os

import matplotlib
matplotlib.use(\"Agg\")
import matplotlib.pyplot as plt

HERE = os.path.dirname(os.path.abspath(__file__))


def rows(name):
    with open(os.path.join(HERE, name), newline=\"\") as f:
        return list(csv.DictReader(f))


def col(rs, key):
    return [float(r[key]) if r[key] != \"\" else float(\"nan\") for r in rs]

";

const CHANNEL: &str = "\
fr = rows(\"frequency_response.csv\")
pr = rows(\"pulse_response.csv\")
fig, (a, b) = plt.subplots(2, 1, figsize=(7, 7))
a.plot([f / 1e12 for f in col(fr, \"freq_hz\")], col(fr, \"magnitude_db\"))
a.set_xlabel(\"frequency (THz)\")
a.set_ylabel(\"|H(f)| (dB)\")
t = [v * 1e12 for v in col(pr, \"t_s\")]
b.plot(t, col(pr, \"input\"), label=\"input\")
b.plot(t, col(pr, \"output\"), label=\"output\")
b.set_xlabel(\"time (ps)\")
b.legend()
fig.tight_layout()
fig.savefig(os.path.join(HERE, \"channel_response.png\"), dpi=150)
";

const MODE: &str = "\
fig, ax = plt.subplots(figsize=(7, 5))
for path in sorted(glob.glob(os.path.join(HERE, \"sweep_*.csv\"))):
    k = os.path.basename(path)[6:-4]
    rs = rows(os.path.basename(path))
    x = col(rs, \"sweep_var\")
    ax.semilogy(x, col(rs, \"pe1_analytic\"), \"-\", label=f\"Pe1 curve {k}\")
    ax.semilogy(x, col(rs, \"pe2_analytic\"), \"--\", label=f\"Pe2 curve {k}\")
    if rs and rs[0][\"pe1_mc\"] != \"\":
        ax.semilogy(x, col(rs, \"pe1_mc\"), \"o\", ms=3)
        ax.semilogy(x, col(rs, \"pe2_mc\"), \"x\", ms=3)
ax.set_xlabel(\"sweep variable\")
ax.set_ylabel(\"probability of error\")
ax.legend(fontsize=7)
fig.tight_layout()
fig.savefig(os.path.join(HERE, \"mode_detect.png\"), dpi=150)
";

const CLASSIFY: &str = "\
rs = rows(\"pcc.csv\")
fig, ax = plt.subplots(figsize=(7, 5))
for s in dict.fromkeys(r[\"scheme\"] for r in rs):
    sub = [r for r in rs if r[\"scheme\"] == s]
    ax.errorbar(col(sub, \"snr_db\"), col(sub, \"pcc\"), yerr=col(sub, \"std_err\"), marker=\"o\", label=s)
ax.set_xlabel(\"SNR (dB)\")
ax.set_ylabel(\"P_cc\")
ax.set_ylim(-0.05, 1.05)
ax.legend()
fig.tight_layout()
fig.savefig(os.path.join(HERE, \"pcc.png\"), dpi=150)
";

const PREDICT: &str = "\
rs = rows(\"trajectory.csv\")
fig, ax = plt.subplots(figsize=(7, 5))
for key in rs[0]:
    if key.startswith(\"p_\"):
        ax.plot(col(rs, \"step\"), col(rs, key), marker=\"o\", label=key[2:])
ax.set_xlabel(\"step\")
ax.set_ylabel(\"state probability\")
ax.legend()
fig.tight_layout()
fig.savefig(os.path.join(HERE, \"trajectory.png\"), dpi=150)
";

pub fn script(scenario: Scenario) -> String {
    let body = match scenario {
        Scenario::ChannelResponse => CHANNEL,
        Scenario::ModeDetect => MODE,
        Scenario::Classify => CLASSIFY,
        Scenario::Predict => PREDICT,
    };
    format!("{HEADER}{body}")
}
