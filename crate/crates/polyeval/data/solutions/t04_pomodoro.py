def pomodoro_schedule(cycles):
    if cycles < 0:
        raise ValueError("cycles must be non-negative")
    schedule = []
    for _ in range(cycles):
        schedule.append(("work", 25))
        schedule.append(("break", 5))
    return schedule
