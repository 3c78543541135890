def run_quiz(questions, answers):
    score = 0
    feedback = []
    for (_, _, correct), given in zip(questions, answers):
        if given.strip().lower() == correct.strip().lower():
            score += 1
            feedback.append("Correct!")
        else:
            feedback.append(f"Wrong! The answer is {correct}.")
    return score, feedback
