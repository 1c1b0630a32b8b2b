"""Project-wide unit system and conversion constants.

Base units: mm, s, kg, mN, V, mA, kOhm, nF.  With these, F[mN] / m[kg]
is an acceleration in mm/s^2, stiffness in mN/mm equals N/m, and
kOhm * mA = V.  Everything that mixes unit families goes through the
constants below.
"""

GRAVITY = 9810.0  # mm/s^2

# nF * V/s -> mA
CAP_CURRENT_TO_MA = 1e-6

# mN * mm/s (= kg * mm/s^2 * mm/s) -> mW
MECH_POWER_TO_MW = 1e-3

# mA * V is already mW
ELEC_POWER_TO_MW = 1.0

UM_PER_MM = 1000.0


def um_to_mm(value):
    return value / UM_PER_MM


def grams_to_kg(value):
    return value * 1e-3
