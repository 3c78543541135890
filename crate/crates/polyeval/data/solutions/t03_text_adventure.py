def play_story(story, start, choices):
    node = start
    path = [node]
    for choice in choices:
        options = story[node]["options"]
        if not options:
            break
        if choice in options:
            node = options[choice]
            path.append(node)
    return path
