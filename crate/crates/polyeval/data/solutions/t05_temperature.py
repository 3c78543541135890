def convert_temperature(value, from_unit, to_unit):
    to_celsius = {
        "C": lambda v: v,
        "F": lambda v: (v - 32) * 5 / 9,
        "K": lambda v: v - 273.15,
    }
    from_celsius = {
        "C": lambda v: v,
        "F": lambda v: v * 9 / 5 + 32,
        "K": lambda v: v + 273.15,
    }
    if from_unit not in to_celsius or to_unit not in from_celsius:
        raise ValueError("unknown unit")
    return round(from_celsius[to_unit](to_celsius[from_unit](value)), 2)
