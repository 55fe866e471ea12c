def build(text):
    prompt = f'I\'m providing you with the beginning of a rap verse inspired by Drake: "{text}". Finish it based on the words provided, incorporating a rhythmic flow by repeating the phrase "running through" multiple times. Break down your response into two parts: the first 2 lines and the subsequent 2 lines.'
    return prompt
