"""Length units on the integer nanometer grid.

Every geometric length in the package is an ``int`` number of nanometers.
Text formats carry lengths with a unit suffix: ``u`` (micrometer), ``n``
(nanometer) or none (meter).
"""

from decimal import Decimal, InvalidOperation

NM_PER_M = 10**9

_SCALE = {"u": Decimal(1000), "n": Decimal(1), "": Decimal(NM_PER_M)}


def parse_length(text):
    """Parse ``"200u"``, ``"50n"`` or ``"2e-6"`` into integer nanometers.

    Raises ``ValueError`` for malformed numbers and for values that do not
    land exactly on the 1 nm grid.
    """
    if text.endswith(("u", "n")):
        number, suffix = text[:-1], text[-1]
    else:
        number, suffix = text, ""
    try:
        value = Decimal(number) * _SCALE[suffix]
    except InvalidOperation:
        raise ValueError(f"malformed length {text!r}") from None
    if not value.is_finite() or value != value.to_integral_value():
        raise ValueError(f"length {text!r} is not on the 1 nm grid")
    return int(value)


def format_um(nm):
    """Format integer nanometers as a micrometer string with ``u`` suffix."""
    d = (Decimal(int(nm)).scaleb(-3)).normalize()
    s = format(d, "f")
    if s == "-0":
        s = "0"
    return s + "u"


def nm_to_m(nm):
    return nm / NM_PER_M


def m_to_nm(m):
    return int(round(m * NM_PER_M))
