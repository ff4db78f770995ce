#!/usr/bin/env python3
# SPDX-License-Identifier: Apache-2.0
"""Regenerates tests/data/smiles_corpus.tsv using RDKit as the reference toolkit.

The corpus is a fixed list of public compound records (PubChem isomeric SMILES,
with a handful rewritten to exercise %nn ring closures, isotopes and salts).
Run once and commit the output; the C++ parser tests compare against it.
"""
import sys

from rdkit import Chem

CORPUS = [
    ("methane", "C"),
    ("ethanol", "CCO"),
    ("acetic_acid", "CC(=O)O"),
    ("acetate", "CC(=O)[O-]"),
    ("cyclopropane", "C1CC1"),
    ("benzene", "c1ccccc1"),
    ("toluene", "Cc1ccccc1"),
    ("phenol", "Oc1ccccc1"),
    ("pyridine", "c1ccncc1"),
    ("pyrrole", "c1cc[nH]c1"),
    ("furan", "c1ccoc1"),
    ("thiophene", "c1ccsc1"),
    ("imidazole", "c1c[nH]cn1"),
    ("naphthalene", "c1ccc2ccccc2c1"),
    ("indole", "c1ccc2[nH]ccc2c1"),
    ("quinoline", "c1ccc2ncccc2c1"),
    ("aspirin", "CC(=O)Oc1ccccc1C(=O)O"),
    ("paracetamol", "CC(=O)Nc1ccc(O)cc1"),
    ("ibuprofen", "CC(C)Cc1ccc(cc1)C(C)C(=O)O"),
    ("caffeine", "Cn1cnc2c1c(=O)n(C)c(=O)n2C"),
    ("theobromine", "Cn1cnc2c1c(=O)[nH]c(=O)n2C"),
    ("nicotine", "CN1CCC[C@H]1c1cccnc1"),
    ("glucose", "OC[C@H]1OC(O)[C@H](O)[C@@H](O)[C@@H]1O"),
    ("alanine", "C[C@@H](C(=O)O)N"),
    ("glycine_zwitterion", "[NH3+]CC([O-])=O"),
    ("serine", "OC[C@H](N)C(=O)O"),
    ("cysteine", "N[C@@H](CS)C(=O)O"),
    ("tryptophan", "N[C@@H](Cc1c[nH]c2ccccc12)C(=O)O"),
    ("histidine", "N[C@@H](Cc1c[nH]cn1)C(=O)O"),
    ("phenylalanine", "N[C@@H](Cc1ccccc1)C(=O)O"),
    ("urea", "NC(N)=O"),
    ("acetone", "CC(C)=O"),
    ("acetaldehyde", "CC=O"),
    ("formaldehyde", "C=O"),
    ("acetonitrile", "CC#N"),
    ("nitrobenzene", "[O-][N+](=O)c1ccccc1"),
    ("nitromethane_pentavalent", "CN(=O)=O"),
    ("diethyl_ether", "CCOCC"),
    ("ethyl_acetate", "CCOC(C)=O"),
    ("dimethyl_sulfoxide", "CS(C)=O"),
    ("methanesulfonic_acid", "CS(=O)(=O)O"),
    ("sulfuric_acid", "OS(=O)(=O)O"),
    ("phosphoric_acid", "OP(=O)(O)O"),
    ("trimethyl_phosphate", "COP(=O)(OC)OC"),
    ("chloroform", "ClC(Cl)Cl"),
    ("bromobenzene", "Brc1ccccc1"),
    ("iodomethane", "CI"),
    ("fluorobenzene", "Fc1ccccc1"),
    ("trifluoroacetic_acid", "OC(=O)C(F)(F)F"),
    ("ethanethiol", "CCS"),
    ("dimethyl_disulfide", "CSSC"),
    ("boric_acid", "OB(O)O"),
    ("phenylboronic_acid", "OB(O)c1ccccc1"),
    ("sodium_chloride", "[Na+].[Cl-]"),
    ("ammonium_chloride", "[NH4+].[Cl-]"),
    ("sodium_acetate", "CC(=O)[O-].[Na+]"),
    ("water", "O"),
    ("ammonia", "N"),
    ("hydrogen_sulfide", "S"),
    ("deuterated_methane", "[2H]C([2H])([2H])[2H]"),
    ("carbon13_methanol", "[13CH3]O"),
    ("ethylene", "C=C"),
    ("acetylene", "C#C"),
    ("butadiene", "C=CC=C"),
    ("trans_2_butene", "C/C=C/C"),
    ("cis_2_butene", "C/C=C\\C"),
    ("cyclohexane", "C1CCCCC1"),
    ("cyclohexene", "C1CC=CCC1"),
    ("kekule_benzene", "C1=CC=CC=C1"),
    ("decalin_pct", "C%10CCC%11CCCCC%11C%10"),
    ("spiropentane", "C1CC12CC2"),
    ("adamantane", "C1C2CC3CC1CC(C2)C3"),
    ("cubane", "C12C3C4C1C5C2C3C45"),
    ("norbornane", "C1CC2CCC1C2"),
    ("morpholine", "C1COCCN1"),
    ("piperidine", "C1CCNCC1"),
    ("piperazine", "C1CNCCN1"),
    ("tetrahydrofuran", "C1CCOC1"),
    ("lactic_acid", "C[C@@H](O)C(=O)O"),
    ("citric_acid", "OC(=O)CC(O)(CC(=O)O)C(=O)O"),
    ("oxalic_acid", "OC(=O)C(=O)O"),
    ("benzoic_acid", "OC(=O)c1ccccc1"),
    ("salicylic_acid", "OC(=O)c1ccccc1O"),
    ("benzaldehyde", "O=Cc1ccccc1"),
    ("acetophenone", "CC(=O)c1ccccc1"),
    ("aniline", "Nc1ccccc1"),
    ("benzonitrile", "N#Cc1ccccc1"),
    ("dopamine", "NCCc1ccc(O)c(O)c1"),
    ("serotonin", "NCCc1c[nH]c2ccc(O)cc12"),
    ("adrenaline", "CNC[C@H](O)c1ccc(O)c(O)c1"),
    ("metformin", "CN(C)C(=N)NC(N)=N"),
    ("lidocaine", "CCN(CC)CC(=O)Nc1c(C)cccc1C"),
    ("diazepam", "CN1C(=O)CN=C(c2ccccc2)c2cc(Cl)ccc21"),
    ("sulfanilamide", "Nc1ccc(cc1)S(N)(=O)=O"),
    ("penicillin_g", "CC1(C)S[C@@H]2[C@H](NC(=O)Cc3ccccc3)C(=O)N2[C@H]1C(=O)O"),
    ("cholesterol_core", "C[C@H](CCCC(C)C)[C@H]1CC[C@H]2[C@@H]3CC=C4C[C@@H](O)CC[C@]4(C)[C@H]3CC[C@]12C"),
    ("tmc_1c", "CCCCC(C)/C=C(\\C)/C=C/C(=O)NC1=C[C@]([C@@H](CC1=O)O)(/C=C/C=C/C=C/C(=O)NC2=C(CCC2=O)O)O"),
    ("ferrous_sulfate", "[Fe+2].[O-]S([O-])(=O)=O"),
    ("selenophene", "c1cc[se]c1"),
    ("caprolactam", "O=C1CCCCCN1"),
]


def main() -> int:
    out = sys.stdout
    out.write("# name\tsmiles\tatoms\tbonds\trings\tring_atoms\tring_bonds\ttotal_h\tfragments\tnet_charge\n")
    for name, smi in CORPUS:
        mol = Chem.MolFromSmiles(smi)
        if mol is None:
            raise SystemExit(f"RDKit rejected {name}: {smi}")
        # Explicit [2H] atoms stay graph atoms in both RDKit and the C++ parser.
        atoms = mol.GetNumAtoms()
        bonds = mol.GetNumBonds()
        ring_atoms = sum(1 for a in mol.GetAtoms() if a.IsInRing())
        ring_bonds = sum(1 for b in mol.GetBonds() if b.IsInRing())
        total_h = sum(a.GetTotalNumHs() for a in mol.GetAtoms())
        frags = len(Chem.GetMolFrags(mol))
        charge = sum(a.GetFormalCharge() for a in mol.GetAtoms())
        # Circuit rank, not SSSR size: the two differ on cages such as cubane.
        rings = bonds - atoms + frags
        out.write(f"{name}\t{smi}\t{atoms}\t{bonds}\t{rings}\t{ring_atoms}\t{ring_bonds}\t{total_h}\t{frags}\t{charge}\n")
    if len(CORPUS) != 100:
        raise SystemExit(f"corpus must hold exactly 100 records, has {len(CORPUS)}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
