class FlashcardDeck:
    def __init__(self):
        self._cards = []

    def add_card(self, subject, question, answer):
        self._cards.append((subject, question, answer))

    def subjects(self):
        return sorted({s for s, _, _ in self._cards})

    def cards(self, subject):
        return [q for s, q, _ in self._cards if s == subject]

    def check(self, question, response):
        for _, q, a in self._cards:
            if q == question:
                return a.strip().lower() == response.strip().lower()
        return False

    def score(self, responses):
        return sum(1 for q, r in responses.items() if self.check(q, r))
