#!/usr/bin/env python3
"""Convert the raw COMPAS, German credit and Adult files into headered CSVs.

Usage: prepare_data.py <raw_dir> <out_dir>

<raw_dir> must contain compas/compas-scores-two-years.csv, german/german.data
and adult/adult.data (the layout shipped inside the `responsibly` wheel).
"""
import csv
import os
import sys

GERMAN_COLUMNS = [
    "checking_status", "duration", "credit_history", "purpose", "credit_amount",
    "savings", "employment", "installment_rate", "personal_status", "other_debtors",
    "residence_since", "property", "age", "other_installment", "housing",
    "existing_credits", "job", "num_liable", "telephone", "foreign_worker", "credit",
]

ADULT_COLUMNS = [
    "age", "workclass", "fnlwgt", "education", "education_num", "marital_status",
    "occupation", "relationship", "race", "sex", "capital_gain", "capital_loss",
    "hours_per_week", "native_country", "income",
]

COMPAS_KEEP = [
    "sex", "age", "age_cat", "race", "juv_fel_count", "juv_misd_count",
    "juv_other_count", "priors_count", "c_charge_degree", "two_year_recid",
]


def german(raw, out):
    with open(os.path.join(raw, "german", "german.data")) as src, open(out, "w", newline="") as dst:
        w = csv.writer(dst)
        w.writerow(GERMAN_COLUMNS)
        for line in src:
            parts = line.split()
            if parts:
                w.writerow(parts)


def compas(raw, out):
    # Standard ProPublica screening filter.
    with open(os.path.join(raw, "compas", "compas-scores-two-years.csv")) as src, open(out, "w", newline="") as dst:
        r = csv.reader(src)
        header = next(r)
        idx = {}
        for i, name in enumerate(header):
            idx.setdefault(name, i)
        w = csv.writer(dst)
        w.writerow(COMPAS_KEEP)
        for row in r:
            days = row[idx["days_b_screening_arrest"]]
            if days == "" or not -30 <= int(float(days)) <= 30:
                continue
            if row[idx["is_recid"]] == "-1" or row[idx["c_charge_degree"]] == "O":
                continue
            if row[idx["score_text"]] == "N/A":
                continue
            w.writerow([row[idx[c]] for c in COMPAS_KEEP])


def adult(raw, out):
    with open(os.path.join(raw, "adult", "adult.data")) as src, open(out, "w", newline="") as dst:
        w = csv.writer(dst)
        w.writerow(ADULT_COLUMNS)
        for line in src:
            parts = [p.strip() for p in line.strip().split(",")]
            if len(parts) != len(ADULT_COLUMNS) or "?" in parts:
                continue
            w.writerow(parts)


def main():
    raw, out_dir = sys.argv[1], sys.argv[2]
    os.makedirs(out_dir, exist_ok=True)
    german(raw, os.path.join(out_dir, "german.csv"))
    compas(raw, os.path.join(out_dir, "compas.csv"))
    adult(raw, os.path.join(out_dir, "adult.csv"))


if __name__ == "__main__":
    main()
