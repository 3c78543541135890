class TodoList:
    def __init__(self):
        self._tasks = {}
        self._done = set()

    def add(self, title):
        task_id = len(self._tasks) + 1
        self._tasks[task_id] = title
        return task_id

    def complete(self, task_id):
        if task_id not in self._tasks:
            raise KeyError(task_id)
        self._done.add(task_id)

    def pending(self):
        return [t for i, t in self._tasks.items() if i not in self._done]
